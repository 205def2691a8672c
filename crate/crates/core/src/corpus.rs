//! Document clusters, concept extraction and per-concept features.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{self, BACKGROUND_TOTAL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConceptUnit {
    Unigram,
    #[default]
    Bigram,
    Sentence,
}

impl ConceptUnit {
    pub const ALL: [ConceptUnit; 3] = [ConceptUnit::Unigram, ConceptUnit::Bigram, ConceptUnit::Sentence];

    pub fn as_str(self) -> &'static str {
        match self {
            ConceptUnit::Unigram => "unigram",
            ConceptUnit::Bigram => "bigram",
            ConceptUnit::Sentence => "sentence",
        }
    }
}

impl fmt::Display for ConceptUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConceptUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unigram" => Ok(ConceptUnit::Unigram),
            "bigram" => Ok(ConceptUnit::Bigram),
            "sentence" => Ok(ConceptUnit::Sentence),
            other => Err(Error::validation(format!("unknown concept unit `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub index_in_doc: usize,
    pub index_in_cluster: usize,
    pub text: String,
    pub tokens: Vec<String>,
    /// Parallel to `tokens`: original form began with an uppercase letter.
    pub capitalized: Vec<bool>,
    pub length: usize,
    pub position_ratio: f64,
}

impl Sentence {
    /// Indices into `tokens` that survive stopword removal.
    pub fn content_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| !text::is_stopword(t))
            .map(|(i, _)| i)
    }

    pub fn content_tokens(&self) -> Vec<&str> {
        self.content_positions().map(|i| self.tokens[i].as_str()).collect()
    }
}

/// Per-concept feature values; the names live once on the cluster.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub id: usize,
    pub unit: ConceptUnit,
    pub surface: String,
    pub sentence_ids: BTreeSet<usize>,
    pub features: FeatureVector,
}

impl Concept {
    pub fn surface_tokens(&self) -> impl Iterator<Item = &str> {
        self.surface.split(' ')
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentCluster {
    pub id: String,
    pub unit: ConceptUnit,
    pub documents: Vec<Document>,
    pub sentences: Vec<Sentence>,
    pub concepts: Vec<Concept>,
    /// Feature names shared by every concept; empty before featurization.
    pub schema: Vec<String>,
    #[serde(default)]
    pub references: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct ClusterFile {
    id: String,
    documents: Vec<Document>,
    #[serde(default)]
    references: Vec<String>,
}

impl DocumentCluster {
    /// Segment documents and extract concepts at `unit`.
    pub fn from_documents(
        id: impl Into<String>,
        documents: Vec<Document>,
        references: Vec<String>,
        unit: ConceptUnit,
    ) -> Result<Self> {
        let id = id.into();
        let mut sentences = Vec::new();
        for doc in &documents {
            let pieces: Vec<_> = text::split_sentences(&doc.text)
                .into_iter()
                .map(|s| (s, text::tokenize_cased(s)))
                .filter(|(_, toks)| !toks.is_empty())
                .collect();
            let n = pieces.len();
            for (k, (raw, toks)) in pieces.into_iter().enumerate() {
                let position_ratio = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
                sentences.push(Sentence {
                    doc_id: doc.id.clone(),
                    index_in_doc: k,
                    index_in_cluster: sentences.len(),
                    text: raw.to_string(),
                    length: toks.len(),
                    capitalized: toks.iter().map(|t| t.capitalized).collect(),
                    tokens: toks.into_iter().map(|t| t.text).collect(),
                    position_ratio,
                });
            }
        }
        if sentences.is_empty() {
            return Err(Error::validation(format!("cluster `{id}` contains no sentences")));
        }
        let concepts = extract_concepts(&sentences, unit);
        Ok(DocumentCluster {
            id,
            unit,
            documents,
            sentences,
            concepts,
            schema: Vec::new(),
            references,
        })
    }

    pub fn num_concepts(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_featurized(&self) -> bool {
        !self.schema.is_empty()
    }

    /// Concept ids contained in each sentence, indexed by sentence.
    pub fn sentence_concepts(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.sentences.len()];
        for c in &self.concepts {
            for &s in &c.sentence_ids {
                out[s].push(c.id);
            }
        }
        out
    }

    /// Tokenized reference summaries.
    pub fn reference_tokens(&self) -> Vec<Vec<String>> {
        self.references.iter().map(|r| text::tokenize(r)).collect()
    }

    pub fn min_sentence_length(&self) -> usize {
        self.sentences.iter().map(|s| s.length).min().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sentences.len();
        let mut seen = HashSet::new();
        for c in &self.concepts {
            if c.sentence_ids.is_empty() {
                return Err(Error::validation(format!("concept {} covers no sentence", c.id)));
            }
            if c.sentence_ids.iter().any(|&s| s >= n) {
                return Err(Error::validation(format!("concept {} references a missing sentence", c.id)));
            }
            if c.unit != self.unit {
                return Err(Error::validation(format!("concept {} has unit {}", c.id, c.unit)));
            }
            if !seen.insert(c.surface.as_str()) {
                return Err(Error::validation(format!("duplicate concept surface `{}`", c.surface)));
            }
            if c.features.len() != self.schema.len() || c.features.0.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("concept {} has a malformed feature vector", c.id)));
            }
        }
        Ok(())
    }
}

fn extract_concepts(sentences: &[Sentence], unit: ConceptUnit) -> Vec<Concept> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut concepts: Vec<Concept> = Vec::new();
    let mut add = |surface: String, sid: usize| {
        let id = *index.entry(surface.clone()).or_insert_with(|| {
            concepts.push(Concept {
                id: concepts.len(),
                unit,
                surface,
                sentence_ids: BTreeSet::new(),
                features: FeatureVector::default(),
            });
            concepts.len() - 1
        });
        concepts[id].sentence_ids.insert(sid);
    };
    for s in sentences {
        match unit {
            ConceptUnit::Unigram => {
                for tok in s.content_tokens() {
                    add(tok.to_string(), s.index_in_cluster);
                }
            }
            ConceptUnit::Bigram => {
                let content = s.content_tokens();
                for w in content.windows(2) {
                    add(format!("{} {}", w[0], w[1]), s.index_in_cluster);
                }
            }
            ConceptUnit::Sentence => add(s.tokens.join(" "), s.index_in_cluster),
        }
    }
    concepts
}

/// Read a cluster from a `docs/` directory or a single JSON file.
pub fn ingest_cluster(path: &Path, unit: ConceptUnit) -> Result<DocumentCluster> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_dir() {
        let id = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "cluster".to_string());
        let documents = read_text_dir(&path.join("docs"))?
            .into_iter()
            .map(|(id, text)| Document { id, text })
            .collect::<Vec<_>>();
        let refs_dir = path.join("refs");
        let references = if refs_dir.is_dir() {
            read_text_dir(&refs_dir)?.into_iter().map(|(_, t)| t).collect()
        } else {
            Vec::new()
        };
        if documents.is_empty() {
            return Err(Error::validation(format!("{} has no documents", path.display())));
        }
        DocumentCluster::from_documents(id, documents, references, unit)
    } else {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ClusterFile =
            serde_json::from_str(&raw).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if file.documents.is_empty() {
            return Err(Error::validation(format!("{} has no documents", path.display())));
        }
        DocumentCluster::from_documents(file.id, file.documents, file.references, unit)
    }
}

fn read_text_dir(dir: &Path) -> Result<Vec<(String, String)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.extension().is_some_and(|e| e == "txt") {
            files.push(p);
        }
    }
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((id, text))
        })
        .collect()
}

/// Number of unordered concept pairs, `N(N-1)/2`.
pub fn count_candidate_pairs(cluster: &DocumentCluster) -> Result<u64> {
    let n = cluster.num_concepts() as u64;
    if n < 2 {
        return Err(Error::validation(format!("need at least 2 concepts, found {n}")));
    }
    Ok(n * (n - 1) / 2)
}

/// Word vectors loaded from `word v1 ... vd` lines.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn parse(raw: &str) -> Result<Self> {
        let mut table = EmbeddingTable::default();
        for (lineno, line) in raw.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values = parts
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("embedding line {}: {e}", lineno + 1)))?;
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse(format!("embedding line {} has no usable values", lineno + 1)));
            }
            if table.dim == 0 {
                table.dim = values.len();
            } else if values.len() != table.dim {
                return Err(Error::SchemaMismatch { expected: table.dim, got: values.len() });
            }
            table.vectors.insert(word.to_lowercase(), values);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&raw)
    }

    pub fn from_vectors(vectors: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut table = EmbeddingTable::default();
        for (word, v) in vectors {
            if table.dim == 0 {
                table.dim = v.len();
            } else if v.len() != table.dim {
                return Err(Error::SchemaMismatch { expected: table.dim, got: v.len() });
            }
            table.vectors.insert(word, v);
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// Mean vector of the words that have an embedding.
    pub fn mean_of<'a>(&self, words: impl IntoIterator<Item = &'a str>) -> Option<Vec<f64>> {
        let mut acc = vec![0.0; self.dim];
        let mut n = 0usize;
        for w in words {
            if let Some(v) = self.get(w) {
                acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
                n += 1;
            }
        }
        (n > 0).then(|| acc.into_iter().map(|a| a / n as f64).collect())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub const FEATURE_NAMES: [&str; 9] = [
    "tfidf",
    "doc_freq",
    "cooccurrence",
    "uppercase",
    "signature",
    "embedding_centrality",
    "position",
    "sentence_length",
    "unit_length",
];

/// Unnormalized surface features, one row per concept in [`FEATURE_NAMES`] order.
pub fn raw_features(cluster: &DocumentCluster, embeddings: Option<&EmbeddingTable>) -> Result<Vec<Vec<f64>>> {
    if let Some(table) = embeddings {
        if table.dim() == 0 {
            return Err(Error::SchemaMismatch { expected: 1, got: 0 });
        }
    }
    let n_docs = cluster.documents.len().max(1) as f64;
    let doc_index: HashMap<&str, usize> =
        cluster.documents.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();

    // cluster-level unigram counts over content tokens
    let mut cluster_counts: HashMap<&str, f64> = HashMap::new();
    let mut cluster_total = 0.0;
    for s in &cluster.sentences {
        for t in s.content_tokens() {
            *cluster_counts.entry(t).or_default() += 1.0;
            cluster_total += 1.0;
        }
    }

    // per-word document sets and neighbours, for sentence concepts
    let mut word_docs: HashMap<&str, BTreeSet<usize>> = HashMap::new();
    let mut word_neighbours: HashMap<&str, HashSet<&str>> = HashMap::new();
    if cluster.unit == ConceptUnit::Sentence {
        for s in &cluster.sentences {
            let d = doc_index.get(s.doc_id.as_str()).copied().unwrap_or(0);
            let toks = s.content_tokens();
            for &t in &toks {
                word_docs.entry(t).or_default().insert(d);
                let n = word_neighbours.entry(t).or_default();
                n.extend(toks.iter().copied().filter(|&u| u != t));
            }
        }
    }

    let centroid = embeddings.and_then(|table| {
        table.mean_of(cluster.sentences.iter().flat_map(|s| s.content_tokens()))
    });

    let mut rows = Vec::with_capacity(cluster.concepts.len());
    for c in &cluster.concepts {
        let surface: Vec<&str> = c.surface_tokens().collect();
        let mut occurrences = 0.0;
        let mut capitalized = 0.0;
        let mut docs = BTreeSet::new();
        let mut neighbours: HashSet<&str> = HashSet::new();
        let mut best_position = f64::INFINITY;
        let mut length_sum = 0.0;
        for &sid in &c.sentence_ids {
            let s = &cluster.sentences[sid];
            docs.insert(doc_index.get(s.doc_id.as_str()).copied().unwrap_or(0));
            best_position = best_position.min(s.position_ratio);
            length_sum += s.length as f64;
            for cap in occurrence_caps(s, cluster.unit, &surface) {
                occurrences += 1.0;
                if cap {
                    capitalized += 1.0;
                }
            }
            for t in s.content_tokens() {
                if !surface.contains(&t) {
                    neighbours.insert(t);
                }
            }
        }
        let mut df = docs.len() as f64;
        let mut tfidf = occurrences * (n_docs / df).ln();
        let mut cooccurrence = neighbours.len() as f64;
        if cluster.unit == ConceptUnit::Sentence {
            let words: Vec<&str> = c.sentence_ids.iter().flat_map(|&sid| cluster.sentences[sid].content_tokens()).collect();
            if !words.is_empty() {
                let k = words.len() as f64;
                let wdf = |t: &str| word_docs.get(t).map_or(1, |d| d.len()) as f64;
                tfidf = words.iter().map(|&t| cluster_counts.get(t).copied().unwrap_or(0.0) * (n_docs / wdf(t)).ln()).sum();
                df = words.iter().map(|&t| wdf(t)).sum::<f64>() / k;
                cooccurrence = words.iter().map(|&t| word_neighbours.get(t).map_or(0, |n| n.len()) as f64).sum::<f64>() / k;
            }
        }
        let content_surface: Vec<&str> =
            surface.iter().copied().filter(|t| !text::is_stopword(t)).collect();
        let signature = if content_surface.is_empty() {
            0.0
        } else {
            content_surface
                .iter()
                .map(|t| signature_llr(cluster_counts.get(t).copied().unwrap_or(0.0), cluster_total, t))
                .sum::<f64>()
                / content_surface.len() as f64
        };
        let embedding = match (embeddings, &centroid) {
            (Some(table), Some(centre)) => table
                .mean_of(content_surface.iter().copied())
                .map(|v| cosine(&v, centre))
                .unwrap_or(0.0),
            _ => 0.0,
        };
        rows.push(vec![
            tfidf,
            df / n_docs,
            cooccurrence,
            if occurrences > 0.0 { capitalized / occurrences } else { 0.0 },
            signature,
            embedding,
            best_position,
            length_sum / c.sentence_ids.len() as f64,
            surface.len() as f64,
        ]);
    }
    Ok(rows)
}

/// One entry per occurrence of `surface`: was its first token capitalized.
fn occurrence_caps(s: &Sentence, unit: ConceptUnit, surface: &[&str]) -> Vec<bool> {
    match unit {
        ConceptUnit::Sentence => vec![s.capitalized.first().copied().unwrap_or(false)],
        ConceptUnit::Unigram | ConceptUnit::Bigram => {
            let positions: Vec<usize> = s.content_positions().collect();
            positions
                .windows(surface.len())
                .filter(|w| w.iter().zip(surface).all(|(&p, t)| s.tokens[p] == *t))
                .map(|w| s.capitalized[w[0]])
                .collect()
        }
    }
}

/// Dunning log-likelihood ratio of a term in the cluster against the
/// background table; zero when the term is not over-represented.
fn signature_llr(k1: f64, n1: f64, term: &str) -> f64 {
    let k2 = text::background_count(term);
    let n2 = BACKGROUND_TOTAL;
    if n1 <= 0.0 || k1 / n1 <= k2 / n2 {
        return 0.0;
    }
    let ll = |k: f64, n: f64, p: f64| {
        let a = if k > 0.0 { k * p.ln() } else { 0.0 };
        let b = if n - k > 0.0 { (n - k) * (1.0 - p).ln() } else { 0.0 };
        a + b
    };
    let p1 = k1 / n1;
    let p2 = k2 / n2;
    let p = (k1 + k2) / (n1 + n2);
    2.0 * (ll(k1, n1, p1) + ll(k2, n2, p2) - ll(k1, n1, p) - ll(k2, n2, p))
}

/// Min–max scale each column to `[0, 1]`; constant columns become 0.
pub fn min_max_normalize(rows: &mut [Vec<f64>]) {
    let Some(width) = rows.first().map(Vec::len) else { return };
    for k in 0..width {
        let (lo, hi) = rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[k]), hi.max(r[k])));
        let span = hi - lo;
        for r in rows.iter_mut() {
            r[k] = if span > 0.0 { (r[k] - lo) / span } else { 0.0 };
        }
    }
}

/// Attach normalized feature vectors to every concept.
pub fn featurize_concepts(mut cluster: DocumentCluster, embeddings: Option<&EmbeddingTable>) -> Result<DocumentCluster> {
    let mut rows = raw_features(&cluster, embeddings)?;
    min_max_normalize(&mut rows);
    for (c, row) in cluster.concepts.iter_mut().zip(rows) {
        c.features = FeatureVector(row);
    }
    cluster.schema = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    Ok(cluster)
}

/// Ingest and featurize in one step.
pub fn load_cluster(path: &Path, unit: ConceptUnit, embeddings: Option<&EmbeddingTable>) -> Result<DocumentCluster> {
    featurize_concepts(ingest_cluster(path, unit)?, embeddings)
}

/// Surface form → concept id.
pub fn concept_lookup(cluster: &DocumentCluster) -> BTreeMap<&str, usize> {
    cluster.concepts.iter().map(|c| (c.surface.as_str(), c.id)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> Document {
        Document { id: id.into(), text: text.into() }
    }

    fn one_doc(unit: ConceptUnit) -> DocumentCluster {
        DocumentCluster::from_documents("t", vec![doc("d0", "A b. C d.")], vec![], unit).unwrap()
    }

    #[test]
    fn unigram_example() {
        let c = one_doc(ConceptUnit::Unigram);
        assert_eq!(c.sentences.len(), 2);
        assert_eq!(c.concepts.len(), 4);
        c.validate().unwrap();
    }

    #[test]
    fn sentence_unit_maps_one_to_one() {
        let c = one_doc(ConceptUnit::Sentence);
        assert_eq!(c.concepts.len(), 2);
        for (i, concept) in c.concepts.iter().enumerate() {
            assert_eq!(concept.sentence_ids, BTreeSet::from([i]));
        }
    }

    #[test]
    fn duplicate_sentences_share_a_concept() {
        let c = DocumentCluster::from_documents(
            "t",
            vec![doc("a", "Same words here. Other words."), doc("b", "Same words here.")],
            vec![],
            ConceptUnit::Sentence,
        )
        .unwrap();
        assert_eq!(c.sentences.len(), 3);
        assert_eq!(c.concepts.len(), 2);
        assert_eq!(c.concepts[0].sentence_ids, BTreeSet::from([0, 2]));
    }

    #[test]
    fn position_ratio_definition() {
        let c = DocumentCluster::from_documents(
            "t",
            vec![doc("a", "One. Two. Three."), doc("b", "Alone.")],
            vec![],
            ConceptUnit::Unigram,
        )
        .unwrap();
        let ratios: Vec<f64> = c.sentences.iter().map(|s| s.position_ratio).collect();
        assert_eq!(ratios, vec![0.0, 0.5, 1.0, 0.0]);
    }

    #[test]
    fn empty_cluster_is_rejected() {
        let err = DocumentCluster::from_documents("t", vec![doc("a", " ... ")], vec![], ConceptUnit::Unigram);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn candidate_pair_counts() {
        let mut c = one_doc(ConceptUnit::Unigram);
        assert_eq!(count_candidate_pairs(&c).unwrap(), 6);
        c.concepts.truncate(2);
        assert_eq!(count_candidate_pairs(&c).unwrap(), 1);
        c.concepts.truncate(1);
        assert!(count_candidate_pairs(&c).is_err());
    }

    #[test]
    fn ubiquitous_concept_has_zero_tfidf() {
        let c = DocumentCluster::from_documents(
            "t",
            vec![doc("a", "Storm hits coast."), doc("b", "Storm damage grows.")],
            vec![],
            ConceptUnit::Unigram,
        )
        .unwrap();
        let raw = raw_features(&c, None).unwrap();
        let storm = c.concepts.iter().position(|k| k.surface == "storm").unwrap();
        assert_eq!(raw[storm][0], 0.0);
        let c = featurize_concepts(c, None).unwrap();
        assert_eq!(c.concepts[storm].features.0[0], 0.0);
    }

    #[test]
    fn normalization_bounds() {
        let c = DocumentCluster::from_documents(
            "t",
            vec![
                doc("a", "Rain fell on Monday. Flood waters rose quickly. Rain returned."),
                doc("b", "Officials closed the bridge. Flood warnings stay in place."),
            ],
            vec![],
            ConceptUnit::Unigram,
        )
        .unwrap();
        assert_eq!(c.sentences.len(), 5);
        let c = featurize_concepts(c, None).unwrap();
        c.validate().unwrap();
        for k in 0..FEATURE_NAMES.len() {
            let col: Vec<f64> = c.concepts.iter().map(|x| x.features.0[k]).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(lo, 0.0, "feature {k}");
            assert!(hi == 1.0 || hi == 0.0, "feature {k}: constant columns map to 0");
        }
    }

    #[test]
    fn constant_column_normalizes_to_zero() {
        let mut rows = vec![vec![3.0, 1.0], vec![3.0, 5.0]];
        min_max_normalize(&mut rows);
        assert_eq!(rows, vec![vec![0.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn embedding_table_parsing() {
        let t = EmbeddingTable::parse("cat 1 0\ndog 0.5 0.5\n").unwrap();
        assert_eq!(t.dim(), 2);
        assert!(matches!(EmbeddingTable::parse("a 1 2\nb 1"), Err(Error::SchemaMismatch { .. })));
        assert!(EmbeddingTable::parse("a x y").is_err());
        let empty = EmbeddingTable::default();
        let c = one_doc(ConceptUnit::Unigram);
        assert!(matches!(featurize_concepts(c, Some(&empty)), Err(Error::SchemaMismatch { .. })));
    }

    #[test]
    fn embedding_feature_uses_centroid_cosine() {
        let table = EmbeddingTable::parse("b 1 0\nd 0 1\n").unwrap();
        let c = one_doc(ConceptUnit::Unigram);
        let raw = raw_features(&c, Some(&table)).unwrap();
        // centroid of b and d is (0.5, 0.5); cos with either axis is 1/sqrt(2)
        let b = c.concepts.iter().position(|k| k.surface == "b").unwrap();
        let a = c.concepts.iter().position(|k| k.surface == "a").unwrap();
        assert!((raw[b][5] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(raw[a][5], 0.0);
    }
}
