//! Pairwise measurement data: node labels, per-pair observation records, and the
//! count histogram used by the pooled likelihood.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{DataModelKind, ModelSpec, NetworkModelKind};

/// Bijection between external node labels and dense indices `0..n`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeIndex {
    labels: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl NodeIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an index from labels in the given order. Duplicate labels are rejected.
    pub fn from_labels<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut index = NodeIndex::new();
        for (line, label) in labels.into_iter().enumerate() {
            let label = label.into();
            if index.get(&label).is_some() {
                return Err(Error::Parse {
                    line: line + 1,
                    message: format!("duplicate node label {label:?}"),
                });
            }
            index.insert(label);
        }
        Ok(index)
    }

    /// Consecutive numeric labels `"0" .. "n-1"`.
    pub fn numbered(n: usize) -> Self {
        let mut index = NodeIndex::new();
        for i in 0..n {
            index.insert(i.to_string());
        }
        index
    }

    /// Returns the index of `label`, registering it if unseen.
    pub fn insert(&mut self, label: impl Into<String>) -> usize {
        let label = label.into();
        if let Some(&i) = self.lookup.get(&label) {
            return i;
        }
        let i = self.labels.len();
        self.lookup.insert(label.clone(), i);
        self.labels.push(label);
        i
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.lookup.get(label).copied()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Two-column `index,label` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,label\n");
        for (i, l) in self.labels.iter().enumerate() {
            let _ = writeln!(out, "{i},{}", csv_field(l));
        }
        out
    }

    /// Reads a CSV with a `label` column, as written by [`NodeIndex::to_csv`]. An `index`
    /// column, if present, must count up from 0.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        let col = |name: &str| header.iter().position(|h| h == name);
        let label = col("label").ok_or_else(|| Error::Parse {
            line: 1,
            message: "node file needs a label column".into(),
        })?;
        let index = col("index");
        let mut labels = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            if let Some(c) = index {
                let v = rec.get(c).unwrap_or("");
                if v.parse::<usize>().ok() != Some(row) {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected index {row}, found {v:?}"),
                    });
                }
            }
            labels.push(rec.get(label).unwrap_or("").to_string());
        }
        NodeIndex::from_labels(labels)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Unordered node pair with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
}

impl Pair {
    /// Orders the endpoints. Panics on a self-pair.
    pub fn new(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "self-pairs are not valid node pairs");
        if a < b {
            Pair { i: a, j: b }
        } else {
            Pair { i: b, j: a }
        }
    }

    /// Position of this pair in the row-major enumeration of all pairs of `n` nodes.
    pub fn linear_index(&self, n: usize) -> usize {
        self.i * (2 * n - self.i - 1) / 2 + (self.j - self.i - 1)
    }

    pub fn from_linear_index(index: usize, n: usize) -> Self {
        // Row i holds n-1-i pairs.
        let mut i = 0;
        let mut start = 0;
        loop {
            let row = n - 1 - i;
            if index < start + row {
                return Pair {
                    i,
                    j: i + 1 + (index - start),
                };
            }
            start += row;
            i += 1;
        }
    }
}

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Iterates all pairs of `n` nodes in row-major order.
pub fn all_pairs(n: usize) -> impl Iterator<Item = Pair> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| Pair { i, j }))
}

/// Measurement record for one unordered pair `(i, j)`, `i < j`.
///
/// `count` is `X_ij`; `reverse` is `X_ji` for ordered-pair data; `trials` is `N_ij`.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Observation {
    pub count: u32,
    pub reverse: Option<u32>,
    pub trials: Option<u32>,
}

impl Observation {
    pub fn count(count: u32) -> Self {
        Observation {
            count,
            ..Default::default()
        }
    }

    pub fn directed(forward: u32, reverse: u32) -> Self {
        Observation {
            count: forward,
            reverse: Some(reverse),
            trials: None,
        }
    }

    pub fn with_trials(count: u32, trials: u32) -> Self {
        Observation {
            count,
            reverse: None,
            trials: Some(trials),
        }
    }

    /// Measurement values in directed order: `[X_ij]` or `[X_ij, X_ji]`.
    pub fn values(&self) -> impl Iterator<Item = u32> {
        std::iter::once(self.count).chain(self.reverse)
    }

    /// Swaps the direction of an ordered-pair record.
    fn flipped(self) -> Self {
        match self.reverse {
            Some(r) => Observation {
                count: r,
                reverse: Some(self.count),
                trials: self.trials,
            },
            None => self,
        }
    }
}

/// Per-pair measurements over `n` nodes. Pairs without a record read as zero counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationMatrix {
    nodes: NodeIndex,
    directed: bool,
    has_trials: bool,
    records: BTreeMap<Pair, Observation>,
}

impl ObservationMatrix {
    /// Builds a matrix from explicit records, checking every invariant.
    pub fn new(
        nodes: NodeIndex,
        directed: bool,
        records: impl IntoIterator<Item = (Pair, Observation)>,
    ) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Shape(format!(
                "need at least two nodes, found {}",
                nodes.len()
            )));
        }
        let mut map = BTreeMap::new();
        let mut has_trials = None;
        for (pair, rec) in records {
            if pair.i >= pair.j || pair.j >= nodes.len() {
                return Err(Error::Shape(format!("invalid pair ({}, {})", pair.i, pair.j)));
            }
            if directed != rec.reverse.is_some() {
                return Err(Error::Shape(format!(
                    "pair ({}, {}): record direction does not match matrix",
                    pair.i, pair.j
                )));
            }
            if let Some(n) = rec.trials {
                if rec.values().any(|x| x > n) {
                    return Err(Error::Shape(format!(
                        "pair ({}, {}): count exceeds trial count {n}",
                        pair.i, pair.j
                    )));
                }
            }
            match has_trials {
                None => has_trials = Some(rec.trials.is_some()),
                Some(t) if t != rec.trials.is_some() => {
                    return Err(Error::Shape(
                        "trial counts must be present on all records or none".into(),
                    ))
                }
                _ => {}
            }
            if map.insert(pair, rec).is_some() {
                return Err(Error::Shape(format!(
                    "duplicate record for pair ({}, {})",
                    pair.i, pair.j
                )));
            }
        }
        Ok(ObservationMatrix {
            nodes,
            directed,
            has_trials: has_trials.unwrap_or(false),
            records: map,
        })
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &NodeIndex {
        &self.nodes
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn has_trials(&self) -> bool {
        self.has_trials
    }

    pub fn pair_count(&self) -> usize {
        pair_count(self.n())
    }

    /// Record used for pairs that were never listed.
    pub fn default_record(&self) -> Observation {
        Observation {
            count: 0,
            reverse: self.directed.then_some(0),
            trials: None,
        }
    }

    pub fn get(&self, pair: Pair) -> Observation {
        self.records
            .get(&pair)
            .copied()
            .unwrap_or_else(|| self.default_record())
    }

    /// Explicitly listed records, sorted by pair.
    pub fn records(&self) -> impl Iterator<Item = (Pair, Observation)> + '_ {
        self.records.iter().map(|(p, r)| (*p, *r))
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    /// Every pair in row-major order, with absent pairs filled by the default record.
    pub fn iter_pairs(&self) -> AllPairs<'_> {
        AllPairs {
            n: self.n(),
            next: Pair { i: 0, j: 1 },
            explicit: self.records.iter().peekable(),
            default: self.default_record(),
        }
    }

    /// Copy of the matrix with one record replaced.
    pub fn with_record(&self, pair: Pair, rec: Observation) -> Result<Self> {
        let mut records: Vec<_> = self.records().filter(|(p, _)| *p != pair).collect();
        records.push((pair, rec));
        ObservationMatrix::new(self.nodes.clone(), self.directed, records)
    }

    /// Same data under a node relabeling: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        assert_eq!(perm.len(), self.n());
        let mut labels = vec![String::new(); self.n()];
        for (old, &new) in perm.iter().enumerate() {
            labels[new] = self.nodes.label(old).to_string();
        }
        let nodes = NodeIndex::from_labels(labels)?;
        let records = self.records().map(|(p, r)| {
            let (a, b) = (perm[p.i], perm[p.j]);
            if a < b {
                (Pair::new(a, b), r)
            } else {
                (Pair::new(a, b), r.flipped())
            }
        });
        ObservationMatrix::new(nodes, self.directed, records)
    }
}

pub struct AllPairs<'a> {
    n: usize,
    next: Pair,
    explicit: std::iter::Peekable<std::collections::btree_map::Iter<'a, Pair, Observation>>,
    default: Observation,
}

impl Iterator for AllPairs<'_> {
    type Item = (Pair, Observation);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next.i + 1 >= self.n {
            return None;
        }
        let pair = self.next;
        self.next = if pair.j + 1 < self.n {
            Pair {
                i: pair.i,
                j: pair.j + 1,
            }
        } else {
            Pair {
                i: pair.i + 1,
                j: pair.i + 2,
            }
        };
        let rec = match self.explicit.peek() {
            Some((p, r)) if **p == pair => {
                let r = **r;
                self.explicit.next();
                r
            }
            _ => self.default,
        };
        Some((pair, rec))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let remaining = if self.next.i + 1 >= self.n {
            0
        } else {
            pair_count(self.n) - self.next.linear_index(self.n)
        };
        (remaining, Some(remaining))
    }
}

impl ExactSizeIterator for AllPairs<'_> {}

/// Number of node pairs per distinct observation record, including implicit zero pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CountHistogram {
    pub bins: BTreeMap<Observation, u64>,
}

impl CountHistogram {
    pub fn total(&self) -> u64 {
        self.bins.values().sum()
    }

    /// Bins keyed by the count `X` alone (summing over trial counts).
    pub fn by_count(&self) -> BTreeMap<u32, u64> {
        let mut out = BTreeMap::new();
        for (rec, &c) in &self.bins {
            *out.entry(rec.count).or_insert(0) += c;
        }
        out
    }
}

/// Histogram `n(X)` over all pairs; pairs without a record are credited to the zero bin.
pub fn count_histogram(obs: &ObservationMatrix) -> Result<CountHistogram> {
    if obs.is_directed() {
        return Err(Error::Unsupported(
            "count histogram requires scalar per-pair counts, found ordered-pair data".into(),
        ));
    }
    let mut bins: BTreeMap<Observation, u64> = BTreeMap::new();
    let mut explicit = 0u64;
    for (_, rec) in obs.records() {
        *bins.entry(rec).or_insert(0) += 1;
        explicit += 1;
    }
    let implicit = obs.pair_count() as u64 - explicit;
    if implicit > 0 {
        *bins.entry(obs.default_record()).or_insert(0) += implicit;
    }
    Ok(CountHistogram { bins })
}

/// Column delimiter of the input text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delimiter {
    Comma,
    Whitespace,
    /// Comma if the first data line contains one, whitespace otherwise.
    #[default]
    Auto,
}

/// Column layout of the input text.
///
/// Rows are `label_i, label_j, X_ij`. With `directed`, a row gives the measurement of
/// `i` about `j`, optionally followed by `X_ji`. With `trials`, the last column is `N_ij`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataFormat {
    pub delimiter: Delimiter,
    pub directed: bool,
    pub trials: bool,
}

fn split_fields<'a>(line: &'a str, delimiter: Delimiter) -> Vec<&'a str> {
    match delimiter {
        Delimiter::Comma => line.split(',').map(str::trim).collect(),
        Delimiter::Whitespace | Delimiter::Auto => line.split_whitespace().collect(),
    }
}

fn parse_value(field: &str, line: usize, what: &str) -> Result<u32> {
    let v: i64 = field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("{what} {field:?} is not an integer"),
    })?;
    if v < 0 {
        return Err(Error::Parse {
            line,
            message: format!("{what} {v} is negative"),
        });
    }
    u32::try_from(v).map_err(|_| Error::Parse {
        line,
        message: format!("{what} {v} is too large"),
    })
}

/// Parses delimited pair measurements, assigning node indices in first-appearance order.
pub fn parse_observations(text: &str, format: DataFormat) -> Result<ObservationMatrix> {
    parse_observations_with_nodes(text, format, NodeIndex::new())
}

/// Like [`parse_observations`] but starting from pre-registered labels; unseen labels are
/// appended.
pub fn parse_observations_with_nodes(
    text: &str,
    format: DataFormat,
    mut nodes: NodeIndex,
) -> Result<ObservationMatrix> {
    // Directed: per pair, the two directed values and trials, each set at most once.
    struct Partial {
        forward: Option<u32>,
        reverse: Option<u32>,
        trials: Option<u32>,
        line: usize,
    }
    let mut delimiter = format.delimiter;
    let mut partial: BTreeMap<Pair, Partial> = BTreeMap::new();
    let mut first_data = true;
    let (min_cols, max_cols) = match (format.directed, format.trials) {
        (false, false) => (3, 3),
        (false, true) => (4, 4),
        (true, false) => (3, 4),
        (true, true) => (4, 5),
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if delimiter == Delimiter::Auto {
            delimiter = if trimmed.contains(',') {
                Delimiter::Comma
            } else {
                Delimiter::Whitespace
            };
        }
        let fields = split_fields(trimmed, delimiter);
        if first_data {
            first_data = false;
            // Header: a first row whose value columns are not numeric.
            if fields.len() >= 3 && fields[2].parse::<i64>().is_err() {
                continue;
            }
        }
        if fields.len() < min_cols || fields.len() > max_cols {
            return Err(Error::Parse {
                line,
                message: format!(
                    "expected {} columns, found {}",
                    if min_cols == max_cols {
                        min_cols.to_string()
                    } else {
                        format!("{min_cols}-{max_cols}")
                    },
                    fields.len()
                ),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty node label".into(),
            });
        }
        if fields[0] == fields[1] {
            return Err(Error::Parse {
                line,
                message: format!("self-loop on node {:?}", fields[0]),
            });
        }
        let a = nodes.insert(fields[0]);
        let b = nodes.insert(fields[1]);
        let x = parse_value(fields[2], line, "count")?;
        let (x_rev, trials) = match (format.directed, format.trials, fields.len()) {
            (true, false, 4) => (Some(parse_value(fields[3], line, "reverse count")?), None),
            (true, true, 5) => (
                Some(parse_value(fields[3], line, "reverse count")?),
                Some(parse_value(fields[4], line, "trial count")?),
            ),
            (_, true, _) => (None, Some(parse_value(fields[fields.len() - 1], line, "trial count")?)),
            _ => (None, None),
        };
        if let Some(n) = trials {
            if x > n || x_rev.is_some_and(|r| r > n) {
                return Err(Error::Parse {
                    line,
                    message: format!("count exceeds trial count {n}"),
                });
            }
        }
        let pair = Pair::new(a, b);
        // Orient values onto the stored (i < j) order.
        let (fwd, rev) = if a == pair.i { (Some(x), x_rev) } else { (x_rev, Some(x)) };
        let fwd = if format.directed { fwd } else { Some(x) };
        let rev = if format.directed { rev } else { None };

        let conflict = |what: &str, prev_line: usize| Error::Parse {
            line,
            message: format!(
                "conflicting duplicate {what} for pair ({}, {}) (first given on line {prev_line})",
                fields[0], fields[1]
            ),
        };
        match partial.get_mut(&pair) {
            None => {
                partial.insert(
                    pair,
                    Partial {
                        forward: fwd,
                        reverse: rev,
                        trials,
                        line,
                    },
                );
            }
            Some(p) => {
                for (slot, new, what) in [
                    (&mut p.forward, fwd, "count"),
                    (&mut p.reverse, rev, "reverse count"),
                    (&mut p.trials, trials, "trial count"),
                ] {
                    match (*slot, new) {
                        (Some(old), Some(v)) if old != v => return Err(conflict(what, p.line)),
                        (None, Some(v)) => *slot = Some(v),
                        _ => {}
                    }
                }
            }
        }
    }

    let records: Vec<(Pair, Observation)> = partial
        .into_iter()
        .map(|(pair, p)| {
            let rec = Observation {
                count: p.forward.unwrap_or(0),
                reverse: if format.directed {
                    Some(p.reverse.unwrap_or(0))
                } else {
                    None
                },
                trials: p.trials,
            };
            (pair, rec)
        })
        .collect();
    if nodes.len() < 2 {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: format!("need at least two nodes, found {}", nodes.len()),
        });
    }
    ObservationMatrix::new(nodes, format.directed, records)
}

/// Serializes the explicit records as comma-delimited text with a header.
///
/// Rows are ordered so that re-parsing assigns every node the same index.
pub fn serialize_observations(obs: &ObservationMatrix) -> String {
    let format = DataFormat {
        delimiter: Delimiter::Comma,
        directed: obs.is_directed(),
        trials: obs.has_trials(),
    };
    let mut header = String::from("label_i,label_j,count");
    if format.directed {
        header.push_str(",reverse");
    }
    if format.trials {
        header.push_str(",trials");
    }
    let mut out = header;
    out.push('\n');

    let mut emitted = vec![false; obs.n()];
    let mut written: BTreeMap<Pair, ()> = BTreeMap::new();
    let push = |out: &mut String, pair: Pair, rec: Observation| {
        let _ = write!(
            out,
            "{},{},{}",
            csv_field(obs.nodes().label(pair.i)),
            csv_field(obs.nodes().label(pair.j)),
            rec.count
        );
        if let Some(r) = rec.reverse {
            let _ = write!(out, ",{r}");
        }
        if let Some(t) = rec.trials {
            let _ = write!(out, ",{t}");
        }
        out.push('\n');
    };

    // Introduce nodes in index order: node k via a record whose other endpoint is already
    // introduced, or via (k, k+1).
    let mut by_node: Vec<Vec<Pair>> = vec![Vec::new(); obs.n()];
    for (p, _) in obs.records() {
        by_node[p.i].push(p);
        by_node[p.j].push(p);
    }
    for k in 0..obs.n() {
        if emitted[k] {
            continue;
        }
        let choice = by_node[k]
            .iter()
            .copied()
            .find(|p| {
                let other = if p.i == k { p.j } else { p.i };
                other < k && emitted[other]
            })
            .or_else(|| {
                by_node[k]
                    .iter()
                    .copied()
                    .find(|p| p.i == k && p.j == k + 1 && !emitted[k + 1])
            });
        if let Some(p) = choice {
            push(&mut out, p, obs.get(p));
            written.insert(p, ());
            emitted[p.i] = true;
            emitted[p.j] = true;
        }
    }
    for (p, rec) in obs.records() {
        if !written.contains_key(&p) {
            push(&mut out, p, rec);
        }
    }
    out
}

/// A data/model incompatibility reported by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation(pub String);

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lists every way the data are incompatible with the chosen models. Empty means usable.
pub fn validate(obs: &ObservationMatrix, spec: &ModelSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut v = |s: String| out.push(Violation(s));
    let k = spec.edge_types;
    if k < 2 {
        v(format!("edge_types must be at least 2, found {k}"));
    }
    match spec.data {
        DataModelKind::Binomial | DataModelKind::NodeBinomial => {
            if !obs.has_trials() && spec.default_trials.is_none() {
                v("missing trial counts: binomial data models need N_ij (trials column or default_trials)".into());
            } else if obs.has_trials()
                && spec.default_trials.is_none()
                && obs.record_count() < obs.pair_count()
            {
                v("missing trial counts: some pairs are unlisted and no default_trials is set".into());
            }
            if let Some(n) = spec.default_trials {
                if obs.iter_pairs().any(|(_, r)| r.trials.is_none() && r.count > n) {
                    v(format!("count exceeds default_trials = {n}"));
                }
            }
            if k != 2 {
                v("binomial data models support exactly two edge types".into());
            }
        }
        DataModelKind::ReciprocalReport => {
            if !obs.is_directed() {
                v("ordered-pair data required: the reciprocal-report model needs (X_ij, X_ji) records".into());
            }
            if obs.records().any(|(_, r)| r.values().any(|x| x > 1)) {
                v("reciprocal-report observations must be 0/1".into());
            }
            if k != 2 {
                v("the reciprocal-report model supports exactly two edge types".into());
            }
        }
        DataModelKind::Exact => {
            if obs.records().any(|(_, r)| r.count as usize >= k) {
                v(format!("exact observations must be edge types below {k}"));
            }
        }
        DataModelKind::Poisson | DataModelKind::PoissonPropensity => {}
    }
    if obs.is_directed() && spec.data != DataModelKind::ReciprocalReport {
        v(format!(
            "ordered-pair data are not supported by the {} data model",
            spec.data.name()
        ));
    }
    match spec.network {
        NetworkModelKind::SoftConfiguration if k != 2 => {
            v("the soft configuration model supports exactly two edge types".into())
        }
        NetworkModelKind::StochasticBlock => {
            if k != 2 {
                v("the stochastic block model supports exactly two edge types".into());
            }
            match &spec.groups {
                None => v("stochastic block model requires group labels".into()),
                Some(g) if g.len() != obs.n() => v(format!(
                    "group labels cover {} nodes, data have {}",
                    g.len(),
                    obs.n()
                )),
                _ => {}
            }
        }
        _ => {}
    }
    out
}
