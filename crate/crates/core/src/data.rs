//! Vocabulary construction, encoding and contiguous-stream batching.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Result, SkdError};

pub const EOS: &str = "<EOS>";
pub const UNK: &str = "<unk>";
pub const EOS_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const RESERVED: [&str; 2] = [EOS, UNK];

/// Bijective token/index map. Indices 0 and 1 are `<EOS>` and `<unk>`; the
/// rest follow descending frequency, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(SkdError::domain(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line, line number = id; the first two lines are the
    /// reserved tokens.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| SkdError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| SkdError::io(path, e))?;
        let tokens: Vec<String> = text.lines().map(str::to_owned).collect();
        if tokens.len() < RESERVED.len() + 1 || tokens[..2] != RESERVED {
            return Err(SkdError::domain(format!(
                "{}: vocabulary file must start with {EOS} and {UNK} and list at least one word",
                path.display()
            )));
        }
        Vocabulary::from_tokens(tokens)
    }
}

/// Keeps the `max_size - 2` most frequent whitespace tokens of `text`.
/// Occurrences of the reserved strings in the text map onto the reserved ids.
pub fn build_vocab(text: &str, max_size: usize) -> Result<Vocabulary> {
    if max_size < RESERVED.len() + 1 {
        return Err(SkdError::domain(format!(
            "max_size {max_size} leaves no room beside the {} reserved tokens",
            RESERVED.len()
        )));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut seen_any = false;
    for tok in text.split_whitespace() {
        seen_any = true;
        if !RESERVED.contains(&tok) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    if !seen_any {
        return Err(SkdError::domain("cannot build a vocabulary from empty text"));
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let tokens = RESERVED
        .iter()
        .copied()
        .chain(ranked.into_iter().map(|(t, _)| t))
        .take(max_size)
        .map(str::to_owned)
        .collect();
    Vocabulary::from_tokens(tokens)
}

/// Whitespace tokens of every line followed by one `<EOS>`. An empty text
/// is one empty line; a final newline does not start another line.
pub fn encode(text: &str, vocab: &Vocabulary) -> Vec<usize> {
    let mut ids = Vec::new();
    let body = text.strip_suffix('\n').unwrap_or(text);
    for line in body.split('\n') {
        ids.extend(line.split_whitespace().map(|t| vocab.id(t)));
        ids.push(EOS_ID);
    }
    ids
}

pub fn decode<'v>(ids: &[usize], vocab: &'v Vocabulary) -> Vec<&'v str> {
    ids.iter().map(|&i| vocab.token(i).unwrap_or(UNK)).collect()
}

/// Encoded train/valid/test splits.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub source: String,
}

impl Corpus {
    pub fn check_ids(&self, vocab_size: usize) -> Result<()> {
        for (name, split) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            if let Some(&id) = split.iter().find(|&&id| id >= vocab_size) {
                return Err(SkdError::domain(format!(
                    "{name} split contains id {id} >= vocabulary size {vocab_size}"
                )));
            }
        }
        Ok(())
    }
}

/// One `window x batch_size` block; column `b` belongs to stream `b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub inputs: Array2<usize>,
    pub targets: Array2<usize>,
}

impl Batch {
    pub fn window(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn streams(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn stream_inputs(&self, b: usize) -> Vec<usize> {
        self.inputs.column(b).to_vec()
    }

    pub fn stream_targets(&self, b: usize) -> Vec<usize> {
        self.targets.column(b).to_vec()
    }
}

/// Splits `ids` into `batch_size` contiguous streams and cuts them into
/// aligned windows with next-token targets. Tokens that do not fill a whole
/// window are dropped.
pub fn batchify(ids: &[usize], batch_size: usize, window: usize) -> Result<Vec<Batch>> {
    if batch_size == 0 || window == 0 {
        return Err(SkdError::domain("batch_size and window must be at least 1"));
    }
    if ids.len() < batch_size * 2 {
        return Err(SkdError::domain(format!(
            "{} tokens cannot fill {batch_size} streams of at least 2",
            ids.len()
        )));
    }
    let stream_len = ids.len() / batch_size;
    let count = (stream_len - 1) / window;
    let batches = (0..count)
        .map(|k| {
            let start = k * window;
            let inputs = Array2::from_shape_fn((window, batch_size), |(t, b)| {
                ids[b * stream_len + start + t]
            });
            let targets = Array2::from_shape_fn((window, batch_size), |(t, b)| {
                ids[b * stream_len + start + t + 1]
            });
            Batch { inputs, targets }
        })
        .collect();
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_order_and_reserved_tokens() {
        let v = build_vocab("a a b", 10).unwrap();
        assert_eq!(v.tokens(), &["<EOS>", "<unk>", "a", "b"]);
        assert!(v.id("a") < v.id("b"));
    }

    #[test]
    fn truncation_maps_rest_to_unk() {
        let v = build_vocab("a a b", 3).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("b"), UNK_ID);
    }

    #[test]
    fn ties_are_lexicographic() {
        let v = build_vocab("z y x y z x", 10).unwrap();
        assert_eq!(&v.tokens()[2..], &["x", "y", "z"]);
    }

    #[test]
    fn literal_unk_in_text_uses_reserved_id() {
        let v = build_vocab("the <unk> cat <unk> <unk>", 10).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(encode("the <unk>", &v), vec![v.id("the"), UNK_ID, EOS_ID]);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(build_vocab("  \n ", 10).is_err());
        assert!(build_vocab("a", 2).is_err());
    }

    #[test]
    fn encoding() {
        let v = build_vocab("a b", 10).unwrap();
        assert_eq!(encode("", &v), vec![EOS_ID]);
        assert_eq!(encode("\n", &v), vec![EOS_ID]);
        assert_eq!(encode("a b", &v), vec![v.id("a"), v.id("b"), EOS_ID]);
        assert_eq!(encode("a zzz", &v), vec![v.id("a"), UNK_ID, EOS_ID]);
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = build_vocab("the cat sat on the mat", 100).unwrap();
        v.write(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<EOS>\n<unk>\nthe\n"));
        assert_eq!(Vocabulary::read(&path).unwrap(), v);
    }

    #[test]
    fn vocab_file_needs_preamble() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        fs::write(&path, "a\nb\nc\n").unwrap();
        assert!(Vocabulary::read(&path).is_err());
    }

    #[test]
    fn single_stream_batches() {
        let ids: Vec<usize> = (0..10).collect();
        let batches = batchify(&ids, 1, 3).unwrap();
        assert_eq!(batches.len(), 3);
        for (k, b) in batches.iter().enumerate() {
            let start = 3 * k;
            assert_eq!(b.stream_inputs(0), vec![start, start + 1, start + 2]);
            assert_eq!(b.stream_targets(0), vec![start + 1, start + 2, start + 3]);
        }
    }

    #[test]
    fn two_streams_align() {
        let ids: Vec<usize> = (0..10).collect();
        let batches = batchify(&ids, 2, 2).unwrap();
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[0].stream_inputs(0), vec![0, 1]);
        assert_eq!(batches[0].stream_inputs(1), vec![5, 6]);
        assert_eq!(batches[1].stream_targets(0), vec![3, 4]);
        assert_eq!(batches[1].stream_targets(1), vec![8, 9]);
    }

    #[test]
    fn too_short_for_streams() {
        assert!(batchify(&[1, 2, 3], 2, 1).is_err());
        assert!(batchify(&[1, 2, 3, 4], 0, 1).is_err());
        assert!(batchify(&[1, 2, 3, 4], 1, 0).is_err());
    }

    #[test]
    fn corpus_id_check() {
        let c = Corpus {
            train: vec![0, 1, 2],
            valid: vec![5],
            ..Corpus::default()
        };
        assert!(c.check_ids(6).is_ok());
        assert!(c.check_ids(5).is_err());
    }
}
