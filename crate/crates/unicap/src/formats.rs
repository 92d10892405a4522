//! On-disk formats.
//!
//! Binary files are little-endian throughout. Text files are UTF-8 with one
//! record per line and tab-separated fields.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicap_core::align::AssignmentGraph;
use unicap_core::eval::EvalReport;
use unicap_core::text::{PairIndex, Vocabulary};
use unicap_core::{ConceptLexicon, ConceptSet, ParameterStore};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {error}")]
    Io { path: PathBuf, error: io::Error },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, FormatError>;

fn invalid(path: &Path, message: impl Into<String>) -> FormatError {
    FormatError::Invalid {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn line_err(path: &Path, line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Line {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |error| FormatError::Io {
        path: path.to_path_buf(),
        error,
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

/// Writes through a temporary file and a rename so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        let mut w = BufWriter::new(f);
        w.write_all(bytes).map_err(io_err(&tmp))?;
        w.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Non-empty, non-comment lines with their 1-based numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

// ---------------------------------------------------------------- lexicon

pub fn load_lexicon(path: &Path) -> Result<ConceptLexicon> {
    ConceptLexicon::parse(&read_text(path)?).map_err(|e| invalid(path, e.to_string()))
}

pub fn save_lexicon(path: &Path, lex: &ConceptLexicon) -> Result<()> {
    write_atomic(path, lex.to_text().as_bytes())
}

// ---------------------------------------------------------------- corpus

pub fn load_lines(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
}

pub fn save_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    let mut s = String::new();
    for t in vocab.tokens() {
        s.push_str(t);
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let tokens = load_lines(path)?.into_iter().filter(|t| !t.is_empty()).collect();
    Vocabulary::from_tokens(tokens).map_err(|e| invalid(path, e.to_string()))
}

/// Vocabulary sidecar of a checkpoint: `<ckpt>.vocab`.
pub fn vocab_path(ckpt: &Path) -> PathBuf {
    let mut p = ckpt.as_os_str().to_owned();
    p.push(".vocab");
    PathBuf::from(p)
}

// ---------------------------------------------------------------- binary helpers

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &'a Path, bytes: &'a [u8], magic: &[u8]) -> Result<Self> {
        if !bytes.starts_with(magic) {
            return Err(invalid(path, format!("missing magic {:?}", String::from_utf8_lossy(magic))));
        }
        Ok(Self {
            path,
            bytes,
            pos: magic.len(),
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| invalid(self.path, format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| invalid(self.path, "size overflow"))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

// ---------------------------------------------------------------- checkpoints

pub const CKPT_MAGIC: &[u8] = b"CKPT1";
pub const CKPT_VERSION: u32 = 1;

pub fn encode_checkpoint(store: &ParameterStore<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + store.element_count() * 4);
    out.extend_from_slice(CKPT_MAGIC);
    put_u32(&mut out, CKPT_VERSION);
    for p in store.params() {
        put_u32(&mut out, p.name.len() as u32);
        out.extend_from_slice(p.name.as_bytes());
        put_u32(&mut out, p.shape.len() as u32);
        for &d in &p.shape {
            put_u32(&mut out, d as u32);
        }
        for v in &p.value {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<ParameterStore<f32>> {
    let mut r = Reader::new(path, bytes, CKPT_MAGIC)?;
    let version = r.u32()?;
    if version != CKPT_VERSION {
        return Err(invalid(path, format!("unsupported checkpoint version {version}")));
    }
    let mut store = ParameterStore::new();
    while !r.done() {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| invalid(path, "block name is not UTF-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| invalid(path, format!("block {name}: size overflow")))?;
        let values = r.f32s(n)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid(path, format!("block {name} holds non-finite values")));
        }
        store
            .add(&name, &shape, values)
            .map_err(|e| invalid(path, e.to_string()))?;
    }
    Ok(store)
}

pub fn save_checkpoint(path: &Path, store: &ParameterStore<f32>) -> Result<()> {
    write_atomic(path, &encode_checkpoint(store))
}

pub fn load_checkpoint(path: &Path) -> Result<ParameterStore<f32>> {
    decode_checkpoint(path, &read_bytes(path)?)
}

// ---------------------------------------------------------------- pair index

pub const PIDX_MAGIC: &[u8] = b"PIDX1";

/// Per sentence: concept ids, positives as `(sentence, overlap)` and the
/// number of negatives.
pub fn encode_pair_index(index: &PairIndex) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PIDX_MAGIC);
    put_u32(&mut out, index.len() as u32);
    for j in 0..index.len() as u32 {
        let c = index.concepts(j);
        put_u32(&mut out, c.len() as u32);
        for k in c.iter() {
            put_u32(&mut out, k.0);
        }
        let pos = index.positives(j);
        put_u32(&mut out, pos.len() as u32);
        for &(k, w) in pos {
            put_u32(&mut out, k);
            put_u32(&mut out, w);
        }
        put_u32(&mut out, index.negative_count(j));
    }
    out
}

pub fn decode_pair_index(path: &Path, bytes: &[u8]) -> Result<PairIndex> {
    let mut r = Reader::new(path, bytes, PIDX_MAGIC)?;
    let n = r.u32()? as usize;
    let (mut concepts, mut positives, mut negatives) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let nc = r.u32()? as usize;
        let mut set = Vec::with_capacity(nc.min(1 << 16));
        for _ in 0..nc {
            set.push(unicap_core::Concept(r.u32()?));
        }
        concepts.push(ConceptSet::from_unsorted(set));
        let np = r.u32()? as usize;
        let mut list = Vec::with_capacity(np.min(1 << 16));
        for _ in 0..np {
            list.push((r.u32()?, r.u32()?));
        }
        positives.push(list);
        negatives.push(r.u32()?);
    }
    if !r.done() {
        return Err(invalid(path, "trailing bytes"));
    }
    PairIndex::from_parts(concepts, positives, negatives).map_err(|e| invalid(path, e.to_string()))
}

// ---------------------------------------------------------------- image features

pub const IMGF_MAGIC: &[u8] = b"IMGF1";

pub fn encode_features(rows: &[Vec<f32>]) -> Vec<u8> {
    let dim = rows.first().map_or(0, Vec::len);
    assert!(rows.iter().all(|r| r.len() == dim), "feature rows differ in length");
    let mut out = Vec::with_capacity(13 + rows.len() * dim * 4);
    out.extend_from_slice(IMGF_MAGIC);
    put_u32(&mut out, rows.len() as u32);
    put_u32(&mut out, dim as u32);
    for v in rows.iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_features(path: &Path, bytes: &[u8]) -> Result<Vec<Vec<f32>>> {
    let mut r = Reader::new(path, bytes, IMGF_MAGIC)?;
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let mut rows = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let row = r.f32s(dim)?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(invalid(path, format!("feature row {i} is not finite")));
        }
        rows.push(row);
    }
    if !r.done() {
        return Err(invalid(path, "trailing bytes"));
    }
    Ok(rows)
}

pub fn save_features(path: &Path, ids_path: &Path, ids: &[String], rows: &[Vec<f32>]) -> Result<()> {
    assert_eq!(ids.len(), rows.len());
    write_atomic(path, &encode_features(rows))?;
    let mut s = String::new();
    for id in ids {
        s.push_str(id);
        s.push('\n');
    }
    write_atomic(ids_path, s.as_bytes())
}

/// Feature rows with their ids; the two files must agree on the count.
pub fn load_features(path: &Path, ids_path: &Path) -> Result<(Vec<String>, Vec<Vec<f32>>)> {
    let rows = decode_features(path, &read_bytes(path)?)?;
    let ids: Vec<String> = load_lines(ids_path)?.into_iter().filter(|l| !l.is_empty()).collect();
    if ids.len() != rows.len() {
        return Err(invalid(
            ids_path,
            format!("{} ids for {} feature rows", ids.len(), rows.len()),
        ));
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(invalid(ids_path, format!("duplicate image id {dup}")));
    }
    Ok((ids, rows))
}

// ---------------------------------------------------------------- tsv files

fn split2<'a>(path: &Path, line: usize, text: &'a str) -> Result<(&'a str, &'a str)> {
    text.split_once('\t')
        .ok_or_else(|| line_err(path, line, "expected two tab-separated fields"))
}

/// `image_id<TAB>label[,label…]`; an id may appear once.
pub fn load_detections(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text = read_text(path)?;
    let mut out = BTreeMap::new();
    for (n, line) in records(&text) {
        let (id, labels) = match line.split_once('\t') {
            Some(p) => p,
            None => (line, ""),
        };
        let labels: Vec<String> = labels
            .split(',')
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        if out.insert(id.to_string(), labels).is_some() {
            return Err(line_err(path, n, format!("duplicate image id {id}")));
        }
    }
    Ok(out)
}

pub fn save_detections(path: &Path, rows: &[(String, Vec<String>)]) -> Result<()> {
    let mut s = String::new();
    for (id, labels) in rows {
        s.push_str(id);
        s.push('\t');
        s.push_str(&labels.join(","));
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

/// Two-column TSV, keeping order and repeated keys.
pub fn load_pairs_tsv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = read_text(path)?;
    records(&text)
        .map(|(n, line)| split2(path, n, line).map(|(a, b)| (a.to_string(), b.to_string())))
        .collect()
}

pub fn save_pairs_tsv(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let mut s = String::new();
    for (a, b) in rows {
        if a.contains(['\t', '\n']) || b.contains(['\t', '\n']) {
            return Err(invalid(path, format!("field contains a tab or newline: {a:?} / {b:?}")));
        }
        s.push_str(a);
        s.push('\t');
        s.push_str(b);
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

/// References grouped by image id: `image_id<TAB>reference`, ids repeated.
pub fn load_references(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (id, r) in load_pairs_tsv(path)? {
        out.entry(id).or_default().push(r);
    }
    Ok(out)
}

/// Captions keyed by image id, in file order; ids must be unique.
pub fn load_captions(path: &Path) -> Result<Vec<(String, String)>> {
    let rows = load_pairs_tsv(path)?;
    let mut seen = std::collections::BTreeSet::new();
    for (id, _) in &rows {
        if !seen.insert(id.as_str()) {
            return Err(invalid(path, format!("duplicate caption for image {id}")));
        }
    }
    Ok(rows)
}

/// Ground-truth pairs `image_id<TAB>sentence_index` (0-based corpus line).
pub fn load_gt_pairs(path: &Path) -> Result<Vec<(String, usize)>> {
    load_pairs_tsv(path)?
        .into_iter()
        .map(|(id, j)| {
            j.trim()
                .parse::<usize>()
                .map(|j| (id, j))
                .map_err(|_| invalid(path, format!("sentence index {j:?} is not a number")))
        })
        .collect()
}

/// Graph listing `image_id<TAB>corpus_line<TAB>weight`, one edge per line.
/// `sentence_lines` maps sentence ids to 0-based corpus lines.
pub fn save_graph(
    path: &Path,
    graph: &AssignmentGraph,
    image_ids: &[String],
    sentence_lines: &[usize],
) -> Result<()> {
    let mut s = String::new();
    for row in graph.rows() {
        for e in row.edges() {
            s.push_str(&format!(
                "{}\t{}\t{}\n",
                image_ids[row.image as usize], sentence_lines[e.sentence as usize], e.weight
            ));
        }
    }
    write_atomic(path, s.as_bytes())
}

/// Inverse of [`save_graph`]: rebuilds the graph over the given images and
/// sentence lines. Unknown ids or lines are errors.
pub fn load_graph(path: &Path, image_ids: &[String], sentence_lines: &[usize]) -> Result<AssignmentGraph> {
    let image_index: BTreeMap<&str, u32> = image_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i as u32)).collect();
    let line_index: BTreeMap<usize, u32> = sentence_lines.iter().enumerate().map(|(j, &l)| (l, j as u32)).collect();
    let text = read_text(path)?;
    let mut edges = Vec::new();
    for (n, line) in records(&text) {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(line_err(path, n, "expected image_id, corpus line and weight"));
        }
        let i = *image_index
            .get(f[0])
            .ok_or_else(|| line_err(path, n, format!("unknown image id {}", f[0])))?;
        let l: usize = f[1].parse().map_err(|_| line_err(path, n, "corpus line is not a number"))?;
        let j = *line_index
            .get(&l)
            .ok_or_else(|| line_err(path, n, format!("corpus line {l} holds no sentence")))?;
        let w: u32 = f[2].parse().map_err(|_| line_err(path, n, "weight is not a number"))?;
        edges.push((i, j, w));
    }
    Ok(AssignmentGraph::from_edges(&edges, image_ids.len(), sentence_lines.len()))
}

// ---------------------------------------------------------------- report

/// Flat evaluation report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub unique_rate: f64,
    pub novel_rate: f64,
    pub mixing_score: Option<f64>,
    pub captions: usize,
}

impl ReportFile {
    pub fn new(r: &EvalReport, captions: usize) -> Self {
        Self {
            bleu1: r.bleu1,
            bleu2: r.bleu2,
            bleu3: r.bleu3,
            bleu4: r.bleu4,
            rouge_l: r.rouge_l,
            unique_rate: r.unique_rate,
            novel_rate: r.novel_rate,
            mixing_score: r.mixing_score,
            captions,
        }
    }
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| invalid(path, e.to_string()))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let mut s = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(io_err(path))?;
    serde_json::from_str(&s).map_err(|e| invalid(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use unicap_core::text::RESERVED;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn checkpoint_round_trip_is_byte_identical() {
        let mut s = ParameterStore::<f32>::new();
        s.add("enc.gru.w", &[3, 2], vec![0.5, -1.25, 3.0, 1e-7, -0.0, 42.0]).unwrap();
        s.add("dec.out.b", &[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        s.add("scalar", &[], vec![7.5]).unwrap();
        let bytes = encode_checkpoint(&s);
        assert_eq!(&bytes[..5], b"CKPT1");
        assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), 1);
        let back = decode_checkpoint(Path::new("x"), &bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let mut s = ParameterStore::<f32>::new();
        s.add("a", &[2], vec![1.0, 2.0]).unwrap();
        let bytes = encode_checkpoint(&s);
        assert!(decode_checkpoint(Path::new("x"), &bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(Path::new("x"), &bad).is_err());
        let mut nan = bytes;
        let n = nan.len();
        nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_checkpoint(Path::new("x"), &nan).is_err());
    }

    #[test]
    fn features_round_trip_and_id_checks() {
        let dir = tmp();
        let f = dir.path().join("f.imgf");
        let i = dir.path().join("f.ids");
        let rows = vec![vec![1.0f32, 2.0, 3.0], vec![-1.0, 0.5, 0.25]];
        save_features(&f, &i, &["a".into(), "b".into()], &rows).unwrap();
        let (ids, back) = load_features(&f, &i).unwrap();
        assert_eq!(ids, vec!["a", "b"]);
        assert_eq!(back, rows);
        let bytes = read_bytes(&f).unwrap();
        assert_eq!(&bytes[..5], b"IMGF1");
        assert_eq!(bytes.len(), 5 + 8 + 6 * 4);
        fs::write(&i, "a\n").unwrap();
        assert!(load_features(&f, &i).is_err());
        fs::write(&i, "a\na\n").unwrap();
        assert!(load_features(&f, &i).is_err());
    }

    #[test]
    fn pair_index_round_trip() {
        let c = |v: &[u32]| ConceptSet::from_unsorted(v.iter().map(|&k| unicap_core::Concept(k)).collect());
        let sets = vec![c(&[0, 1, 2]), c(&[1, 2]), c(&[3]), c(&[0, 2])];
        let idx = PairIndex::build(&sets);
        let bytes = encode_pair_index(&idx);
        let back = decode_pair_index(Path::new("p"), &bytes).unwrap();
        assert_eq!(encode_pair_index(&back), bytes);
        for j in 0..4 {
            assert_eq!(back.positives(j), idx.positives(j));
            assert_eq!(back.negative_count(j), idx.negative_count(j));
        }
        // tampered overlap
        let mut bad = bytes.clone();
        let pos = 5 + 4 + 4 + 12 + 4 + 4;
        bad[pos] = 9;
        assert!(decode_pair_index(Path::new("p"), &bad).is_err());
    }

    #[test]
    fn tsv_files() {
        let dir = tmp();
        let d = dir.path().join("det.tsv");
        fs::write(&d, "# comment\nimg1\tdog,ball.n.01\nimg2\t\nimg3\n").unwrap();
        let det = load_detections(&d).unwrap();
        assert_eq!(det["img1"], vec!["dog", "ball.n.01"]);
        assert!(det["img2"].is_empty() && det["img3"].is_empty());
        fs::write(&d, "img1\tdog\nimg1\tcat\n").unwrap();
        assert!(matches!(load_detections(&d), Err(FormatError::Line { line: 2, .. })));

        let r = dir.path().join("refs.tsv");
        fs::write(&r, "a\tone two\na\tthree\nb\tfour\n").unwrap();
        let refs = load_references(&r).unwrap();
        assert_eq!(refs["a"], vec!["one two", "three"]);

        let c = dir.path().join("caps.tsv");
        save_pairs_tsv(&c, &[("a".into(), "x y".into()), ("b".into(), "z".into())]).unwrap();
        assert_eq!(load_captions(&c).unwrap().len(), 2);
        assert!(save_pairs_tsv(&c, &[("a".into(), "x\ty".into())]).is_err());
        fs::write(&c, "a\tx\na\ty\n").unwrap();
        assert!(load_captions(&c).is_err());
        fs::write(&c, "no tab here\n").unwrap();
        assert!(matches!(load_pairs_tsv(&c), Err(FormatError::Line { line: 1, .. })));
    }

    #[test]
    fn vocab_and_report_round_trip() {
        let dir = tmp();
        let tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).chain(["dog".into(), "ball".into()]).collect();
        let v = Vocabulary::from_tokens(tokens).unwrap();
        let p = dir.path().join("m.ckpt");
        save_vocab(&vocab_path(&p), &v).unwrap();
        assert_eq!(load_vocab(&vocab_path(&p)).unwrap().tokens(), v.tokens());

        let rep = ReportFile {
            bleu1: 0.5,
            bleu2: 0.25,
            bleu3: 0.125,
            bleu4: 0.0625,
            rouge_l: 0.4,
            unique_rate: 0.2,
            novel_rate: 0.1,
            mixing_score: None,
            captions: 3,
        };
        let j = dir.path().join("r.json");
        save_json(&j, &rep).unwrap();
        let text = read_text(&j).unwrap();
        assert!(text.contains("\"rougeL\": 0.4") && text.contains("\"mixing_score\": null"));
        assert_eq!(load_json::<ReportFile>(&j).unwrap(), rep);
    }

    #[test]
    fn graph_listing_round_trip() {
        let d = tmp();
        let p = d.path().join("graph.tsv");
        let c = |v: &[u32]| ConceptSet::from_unsorted(v.iter().map(|&k| unicap_core::Concept(k)).collect());
        let g = AssignmentGraph::build(&[c(&[0, 1]), c(&[4]), c(&[2])], &[c(&[0]), c(&[0, 1, 2]), c(&[2, 3])]);
        let ids = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let lines = vec![0, 2, 5];
        save_graph(&p, &g, &ids, &lines).unwrap();
        assert_eq!(read_text(&p).unwrap(), "a\t0\t1\na\t2\t2\nc\t2\t1\nc\t5\t1\n");
        assert_eq!(load_graph(&p, &ids, &lines).unwrap(), g);
        fs::write(&p, "a\t1\t1\n").unwrap();
        assert!(matches!(load_graph(&p, &ids, &lines), Err(FormatError::Line { line: 1, .. })));
    }
}
