//! Heterogeneity partition schemes.
//!
//! A [`PartitionScheme`] names a family (basic IID, step/episode two-level
//! skew, category-level, app-level, scaled app-level), a variant within it,
//! the client count and a seed. [`partition`] maps every episode to exactly
//! one client so that the variant's structural rule holds, and
//! [`verify_partition`] re-checks those rules on any assignment.
//!
//! Most label-based variants are built as an integer client × label count
//! matrix which is then materialized by dealing each label's (shuffled)
//! episodes out to clients in index order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Category, Counts, Episode};
use crate::synth::apportion;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("EmptyDataset: nothing to partition")]
    EmptyDataset,
    #[error("InfeasibleScheme: {0}")]
    InfeasibleScheme(String),
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
    #[error("CoverageMismatch: {0}")]
    CoverageMismatch(String),
    #[error("assignment line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = PartitionError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    BasicIid,
    StepEpisode,
    CategoryLevel,
    AppLevel,
    ScaleApp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Iid,
    EpisodeSkew,
    StepSkew,
    BothSkew,
    Skew,
    HalfSkew,
    NonUniform,
    AppSkew,
    AppRandom,
    Random,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::BasicIid => "basic-iid",
            Family::StepEpisode => "step-episode",
            Family::CategoryLevel => "category-level",
            Family::AppLevel => "app-level",
            Family::ScaleApp => "scaleapp",
        }
    }

    pub fn variants(self) -> &'static [Variant] {
        use Variant::*;
        match self {
            Family::BasicIid => &[Iid],
            Family::StepEpisode => &[Iid, EpisodeSkew, StepSkew, BothSkew],
            Family::CategoryLevel => &[Iid, Skew, HalfSkew, NonUniform, AppSkew, AppRandom],
            Family::AppLevel => &[Iid, Skew, HalfSkew, NonUniform],
            Family::ScaleApp => &[Iid, Skew, Random],
        }
    }

    pub const ALL: [Family; 5] = [
        Family::BasicIid,
        Family::StepEpisode,
        Family::CategoryLevel,
        Family::AppLevel,
        Family::ScaleApp,
    ];
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Iid => "iid",
            Variant::EpisodeSkew => "episode-skew",
            Variant::StepSkew => "step-skew",
            Variant::BothSkew => "both-skew",
            Variant::Skew => "skew",
            Variant::HalfSkew => "half-skew",
            Variant::NonUniform => "non-uniform",
            Variant::AppSkew => "app-skew",
            Variant::AppRandom => "app-random",
            Variant::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionScheme {
    pub family: Family,
    pub variant: Variant,
    pub n_clients: usize,
    pub seed: u64,
}

impl PartitionScheme {
    pub fn new(family: Family, variant: Variant, n_clients: usize, seed: u64) -> Result<Self> {
        if !family.variants().contains(&variant) {
            return Err(PartitionError::InvalidScheme(format!(
                "variant `{}` is not part of family `{}`",
                variant.as_str(),
                family.as_str()
            )));
        }
        if n_clients == 0 {
            return Err(PartitionError::InvalidScheme("n_clients must be at least 1".into()));
        }
        Ok(Self {
            family,
            variant,
            n_clients,
            seed,
        })
    }

    /// `family/variant`, e.g. `category-level/half-skew`; `basic-iid` alone.
    pub fn name(&self) -> String {
        match self.family {
            Family::BasicIid => "basic-iid".into(),
            f => format!("{}/{}", f.as_str(), self.variant.as_str()),
        }
    }

    /// Parses a scheme name and attaches client count and seed.
    pub fn parse(name: &str, n_clients: usize, seed: u64) -> Result<Self> {
        let (family, variant) = parse_scheme_name(name)?;
        Self::new(family, variant, n_clients, seed)
    }

    /// Every legal `family/variant` name.
    pub fn all_names() -> Vec<String> {
        Family::ALL
            .iter()
            .flat_map(|&f| {
                f.variants().iter().map(move |&v| match f {
                    Family::BasicIid => "basic-iid".to_string(),
                    _ => format!("{}/{}", f.as_str(), v.as_str()),
                })
            })
            .collect()
    }
}

impl fmt::Display for PartitionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

fn parse_scheme_name(name: &str) -> Result<(Family, Variant)> {
    let name = name.trim().to_lowercase();
    let (fam, var) = name.split_once('/').unwrap_or((name.as_str(), "iid"));
    let family = Family::ALL
        .iter()
        .copied()
        .find(|f| f.as_str() == fam || (fam == "basic" && *f == Family::BasicIid) || (fam == "scale-app" && *f == Family::ScaleApp))
        .ok_or_else(|| PartitionError::InvalidScheme(format!("unknown family `{fam}`")))?;
    let variant = family
        .variants()
        .iter()
        .copied()
        .find(|v| v.as_str() == var)
        .ok_or_else(|| {
            PartitionError::InvalidScheme(format!("unknown variant `{var}` for family `{}`", family.as_str()))
        })?;
    Ok((family, variant))
}

impl FromStr for Family {
    type Err = PartitionError;

    fn from_str(s: &str) -> Result<Self> {
        parse_scheme_name(s).map(|(f, _)| f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionAssignment {
    pub scheme: PartitionScheme,
    pub client_of: BTreeMap<String, usize>,
}

impl PartitionAssignment {
    /// Episodes of each client, in dataset order.
    pub fn client_datasets(&self, dataset: &[Episode]) -> Vec<Vec<Episode>> {
        let mut out = vec![Vec::new(); self.scheme.n_clients];
        for e in dataset {
            if let Some(&c) = self.client_of.get(&e.episode_id) {
                if c < out.len() {
                    out[c].push(e.clone());
                }
            }
        }
        out
    }

    /// Writes the `episode_id<TAB>client_index` file, preceded by one `#` header
    /// line recording the scheme.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# scheme={} clients={} seed={}",
            self.scheme.name(),
            self.scheme.n_clients,
            self.scheme.seed
        )?;
        for (id, c) in &self.client_of {
            writeln!(out, "{id}\t{c}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads an assignment file. Without a scheme header the scheme defaults to
    /// `basic-iid` over `max(client) + 1` clients.
    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut header: Option<PartitionScheme> = None;
        let mut client_of = BTreeMap::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            let perr = |reason: String| PartitionError::Parse { line: i + 1, reason };
            if line.trim().is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if header.is_none() && comment.contains("scheme=") {
                    header = Some(parse_header(comment).map_err(perr)?);
                }
                continue;
            }
            let (id, c) = line
                .split_once('\t')
                .ok_or_else(|| perr("expected `episode_id<TAB>client_index`".into()))?;
            let c: usize = c
                .trim()
                .parse()
                .map_err(|_| perr(format!("bad client index `{c}`")))?;
            if client_of.insert(id.to_string(), c).is_some() {
                return Err(perr(format!("episode `{id}` assigned twice")));
            }
        }
        let scheme = match header {
            Some(s) => s,
            None => {
                let n = client_of.values().max().map_or(1, |m| m + 1);
                PartitionScheme::new(Family::BasicIid, Variant::Iid, n, 0)?
            }
        };
        Ok(Self { scheme, client_of })
    }
}

fn parse_header(comment: &str) -> std::result::Result<PartitionScheme, String> {
    let mut fields = HashMap::new();
    for kv in comment.split_whitespace() {
        if let Some((k, v)) = kv.split_once('=') {
            fields.insert(k, v);
        }
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| format!("header lacks `{k}`"));
    let clients = get("clients")?.parse().map_err(|_| "bad `clients`".to_string())?;
    let seed = get("seed")?.parse().map_err(|_| "bad `seed`".to_string())?;
    PartitionScheme::parse(get("scheme")?, clients, seed).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    App,
    Category,
}

impl FromStr for Axis {
    type Err = PartitionError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "app" => Ok(Axis::App),
            "category" => Ok(Axis::Category),
            other => Err(PartitionError::InvalidScheme(format!("unknown axis `{other}`"))),
        }
    }
}

/// Per-episode label index plus the ordered label names for an axis.
struct Labels {
    names: Vec<String>,
    of: Vec<usize>,
}

impl Labels {
    fn new(dataset: &[Episode], axis: Axis) -> Self {
        let names: Vec<String> = match axis {
            Axis::App => crate::data::distinct_apps(dataset),
            Axis::Category => crate::data::distinct_categories(dataset)
                .into_iter()
                .map(|c| c.as_str().to_string())
                .collect(),
        };
        let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let of = dataset
            .iter()
            .map(|e| match axis {
                Axis::App => index[e.app.as_str()],
                Axis::Category => index[e.category.as_str()],
            })
            .collect();
        Self { names, of }
    }

    fn len(&self) -> usize {
        self.names.len()
    }

    /// Episode indices per label, each list shuffled.
    fn groups(&self, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.len()];
        for (i, &l) in self.of.iter().enumerate() {
            groups[l].push(i);
        }
        for g in &mut groups {
            g.shuffle(rng);
        }
        groups
    }
}

fn infeasible<T>(msg: String) -> Result<T> {
    Err(PartitionError::InfeasibleScheme(msg))
}

/// Deals each label's episodes to clients: client `c` takes the next
/// `matrix[c][l]` episodes of label `l`.
fn materialize(matrix: &[Vec<usize>], groups: &[Vec<usize>], n_clients: usize) -> Vec<Vec<usize>> {
    let mut clients = vec![Vec::new(); n_clients];
    for (l, group) in groups.iter().enumerate() {
        let mut it = group.iter();
        for (c, row) in matrix.iter().enumerate() {
            clients[c].extend(it.by_ref().take(row[l]));
        }
        debug_assert!(it.next().is_none(), "matrix column does not cover label {l}");
    }
    clients
}

/// Round-robin dealing of each label with one rotating cursor shared across
/// labels, so per-(client, label) and per-client counts each differ by at most one.
fn deal_iid(groups: &[Vec<usize>], n: usize) -> Vec<Vec<usize>> {
    let mut clients = vec![Vec::new(); n];
    let mut cursor = 0;
    for group in groups {
        for &e in group {
            clients[cursor % n].push(e);
            cursor += 1;
        }
    }
    clients
}

/// Integer matrix with the given margins whose cells are the floor or ceiling
/// of `target` (controlled rounding), found as a bipartite max-flow over the
/// fractional cells. Falls back to unrestricted cells if the fractional graph
/// cannot carry the full deficit.
pub(crate) fn controlled_round(target: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> Vec<Vec<usize>> {
    let n = rows.len();
    let m = cols.len();
    let mut out: Vec<Vec<usize>> = target
        .iter()
        .map(|r| r.iter().map(|x| x.max(0.0).floor() as usize).collect())
        .collect();
    let row_def: Vec<usize> = (0..n).map(|i| rows[i].saturating_sub(out[i].iter().sum())).collect();
    let col_def: Vec<usize> = (0..m)
        .map(|j| cols[j].saturating_sub((0..n).map(|i| out[i][j]).sum()))
        .collect();

    // nodes: 0 = source, 1..=n rows, n+1..=n+m cols, n+m+1 sink
    let size = n + m + 2;
    let sink = size - 1;
    let mut cap = vec![vec![0usize; size]; size];
    for i in 0..n {
        cap[0][1 + i] = row_def[i];
        for j in 0..m {
            let x = target[i][j].max(0.0);
            if x - x.floor() > 1e-9 {
                cap[1 + i][1 + n + j] = 1;
            }
        }
    }
    for j in 0..m {
        cap[1 + n + j][sink] = col_def[j];
    }
    let needed: usize = row_def.iter().sum();
    let mut flow = max_flow(&mut cap, 0, sink);
    if flow < needed {
        for i in 0..n {
            for j in 0..m {
                cap[1 + i][1 + n + j] += needed;
            }
        }
        flow += max_flow(&mut cap, 0, sink);
    }
    debug_assert_eq!(flow, needed);
    // net flow on row->col edges is the reverse capacity
    for i in 0..n {
        for j in 0..m {
            out[i][j] += cap[1 + n + j][1 + i];
        }
    }
    out
}

/// Ford–Fulkerson with DFS augmenting paths on a dense residual matrix.
fn max_flow(cap: &mut [Vec<usize>], source: usize, sink: usize) -> usize {
    fn dfs(cap: &mut [Vec<usize>], u: usize, sink: usize, pushed: usize, seen: &mut [bool]) -> usize {
        if u == sink {
            return pushed;
        }
        seen[u] = true;
        for v in 0..cap.len() {
            if !seen[v] && cap[u][v] > 0 {
                let got = dfs(cap, v, sink, pushed.min(cap[u][v]), seen);
                if got > 0 {
                    cap[u][v] -= got;
                    cap[v][u] += got;
                    return got;
                }
            }
        }
        0
    }
    let mut total = 0;
    loop {
        let mut seen = vec![false; cap.len()];
        let got = dfs(cap, source, sink, usize::MAX, &mut seen);
        if got == 0 {
            return total;
        }
        total += got;
    }
}

/// Iterative proportional fitting of positive `weights` to row/column margins.
fn ipf(weights: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
    let mut t: Vec<Vec<f64>> = weights
        .iter()
        .map(|r| r.iter().map(|w| w.max(1e-12)).collect())
        .collect();
    for _ in 0..2000 {
        for (i, row) in t.iter_mut().enumerate() {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x *= rows[i] as f64 / s);
        }
        let mut worst = 0.0_f64;
        for j in 0..cols.len() {
            let s: f64 = t.iter().map(|r| r[j]).sum();
            if s > 0.0 {
                let f = cols[j] as f64 / s;
                worst = worst.max((s - cols[j] as f64).abs());
                t.iter_mut().for_each(|r| r[j] *= f);
            }
        }
        if worst < 1e-10 {
            break;
        }
    }
    t
}

/// Symmetric Dirichlet draw via normalized Gamma variates.
fn dirichlet(alpha: f64, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let s: f64 = draws.iter().sum();
    if s > 0.0 && s.is_finite() {
        draws.iter().map(|d| d / s).collect()
    } else {
        vec![1.0 / k as f64; k]
    }
}

pub const NON_UNIFORM_ALPHA: f64 = 0.5;
pub const STEP_SKEW_RATIO: f64 = 1.5;
pub const EPISODE_SKEW_RATIO: f64 = 4.0;

fn equal_sizes(total: usize, n: usize) -> Vec<usize> {
    apportion(total, &vec![1.0; n])
}

/// Mixed proportions: every client sees every label at least once, the rest
/// follows per-client Dirichlet weights fitted to the margins.
fn non_uniform(labels: &Labels, n: usize, rng: &mut ChaCha8Rng, what: &str) -> Result<Vec<Vec<usize>>> {
    let m = labels.len();
    let mut col = vec![0usize; m];
    for &l in &labels.of {
        col[l] += 1;
    }
    let rows = equal_sizes(labels.of.len(), n);
    if let Some(j) = (0..m).find(|&j| col[j] < n) {
        return infeasible(format!(
            "non-uniform needs every {what} on every client: `{}` has {} episodes for {n} clients",
            labels.names[j], col[j]
        ));
    }
    if rows.iter().any(|&r| r < m) {
        return infeasible(format!("non-uniform needs at least {m} episodes per client"));
    }
    let weights: Vec<Vec<f64>> = (0..n).map(|_| dirichlet(NON_UNIFORM_ALPHA, m, rng)).collect();
    let rest_rows: Vec<usize> = rows.iter().map(|r| r - m).collect();
    let rest_cols: Vec<usize> = col.iter().map(|c| c - n).collect();
    let fitted = ipf(&weights, &rest_rows, &rest_cols);
    let mut matrix = controlled_round(&fitted, &rest_rows, &rest_cols);
    matrix.iter_mut().flatten().for_each(|x| *x += 1);
    Ok(matrix)
}

/// One label per client; requires exactly as many labels as clients.
fn one_label_per_client(labels: &Labels, n: usize, what: &str) -> Result<Vec<Vec<usize>>> {
    if labels.len() != n {
        return infeasible(format!(
            "skew assigns exactly one {what} per client: dataset has {} {what}s for {n} clients",
            labels.len()
        ));
    }
    let mut col = vec![0usize; n];
    for &l in &labels.of {
        col[l] += 1;
    }
    Ok((0..n).map(|c| (0..n).map(|l| if l == c { col[l] } else { 0 }).collect()).collect())
}

/// Client `k` holds labels `2k mod L` and `2k+1 mod L`; each label is split
/// evenly among its holders (remainder to the lowest-indexed holder).
fn half_skew(labels: &Labels, n: usize, what: &str) -> Result<Vec<Vec<usize>>> {
    let m = labels.len();
    if m < 2 {
        return infeasible(format!("half-skew needs at least two {what}s, dataset has {m}"));
    }
    let mut holders = vec![Vec::new(); m];
    for k in 0..n {
        for l in [(2 * k) % m, (2 * k + 1) % m] {
            holders[l].push(k);
        }
    }
    let mut col = vec![0usize; m];
    for &l in &labels.of {
        col[l] += 1;
    }
    let mut matrix = vec![vec![0usize; m]; n];
    for l in 0..m {
        if holders[l].is_empty() {
            return infeasible(format!(
                "half-skew with {n} clients covers only {} of {m} {what}s",
                2 * n
            ));
        }
        if col[l] < holders[l].len() {
            return infeasible(format!(
                "{what} `{}` has {} episodes but {} holders",
                labels.names[l],
                col[l],
                holders[l].len()
            ));
        }
        for (k, share) in holders[l].iter().zip(apportion(col[l], &vec![1.0; holders[l].len()])) {
            matrix[*k][l] += share;
        }
    }
    Ok(matrix)
}

/// Longest-processing-time assignment of whole apps to clients; `key` picks the
/// load a client is balanced on. Apps are shuffled first so equal-sized apps
/// land randomly.
fn assign_whole_apps(app_sizes: &[(usize, usize)], loads: &mut [usize], rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut apps = app_sizes.to_vec();
    apps.shuffle(rng);
    apps.sort_by_key(|a| std::cmp::Reverse(a.1));
    apps.into_iter()
        .map(|(app, size)| {
            let c = (0..loads.len()).min_by_key(|&c| (loads[c], c)).expect("at least one client");
            loads[c] += size;
            (app, c)
        })
        .collect()
}

fn greedy_steps(
    order: &[usize],
    lens: &[usize],
    count_targets: &[usize],
    step_targets: &[f64],
) -> Vec<Vec<usize>> {
    let n = count_targets.len();
    let mut clients: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut steps = vec![0usize; n];
    for &e in order {
        let c = (0..n)
            .filter(|&c| clients[c].len() < count_targets[c])
            .max_by(|&a, &b| {
                let need = |c: usize| {
                    (step_targets[c] - steps[c] as f64) / (count_targets[c] - clients[c].len()) as f64
                };
                need(a).total_cmp(&need(b)).then(b.cmp(&a))
            })
            .expect("count targets cover every episode");
        clients[c].push(e);
        steps[c] += lens[e];
    }
    clients
}

/// Pairwise swap search that keeps episode counts fixed and pushes step totals
/// toward `targets`, minimizing the summed absolute deviation.
fn rebalance_steps(clients: &mut [Vec<usize>], lens: &[usize], targets: &[f64]) {
    let n = clients.len();
    let max_len = lens.iter().copied().max().unwrap_or(0);
    // hist[c][len] = episodes of that length on client c
    let mut hist: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); max_len + 1]; n];
    let mut excess: Vec<f64> = vec![0.0; n];
    for (c, eps) in clients.iter().enumerate() {
        for &e in eps {
            hist[c][lens[e]].push(e);
        }
        excess[c] = eps.iter().map(|&e| lens[e]).sum::<usize>() as f64 - targets[c];
    }
    for _ in 0..100_000 {
        let mut improved = false;
        for a in 0..n {
            for b in a + 1..n {
                let before = excess[a].abs() + excess[b].abs();
                let mut best: Option<(f64, usize, usize)> = None;
                for la in 1..=max_len {
                    if hist[a][la].is_empty() {
                        continue;
                    }
                    for (lb, slot) in hist[b].iter().enumerate().skip(1) {
                        if la == lb || slot.is_empty() {
                            continue;
                        }
                        let delta = lb as f64 - la as f64;
                        let after = (excess[a] + delta).abs() + (excess[b] - delta).abs();
                        if after < before - 1e-9 && best.is_none_or(|(v, _, _)| after < v) {
                            best = Some((after, la, lb));
                        }
                    }
                }
                if let Some((_, la, lb)) = best {
                    let ea = hist[a][la].pop().expect("nonempty");
                    let eb = hist[b][lb].pop().expect("nonempty");
                    hist[a][lb].push(eb);
                    hist[b][la].push(ea);
                    let delta = lb as f64 - la as f64;
                    excess[a] += delta;
                    excess[b] -= delta;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    for (c, h) in hist.into_iter().enumerate() {
        clients[c] = h.into_iter().flatten().collect();
    }
}

fn step_episode(dataset: &[Episode], scheme: &PartitionScheme, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let n = scheme.n_clients;
    let total_eps = dataset.len();
    if total_eps < n {
        return infeasible(format!("{total_eps} episodes cannot cover {n} clients"));
    }
    let lens: Vec<usize> = dataset.iter().map(Episode::len).collect();
    let total_steps: usize = lens.iter().sum();

    let staircase: Vec<f64> = (0..n)
        .map(|c| {
            if n == 1 {
                1.0
            } else {
                EPISODE_SKEW_RATIO - (EPISODE_SKEW_RATIO - 1.0) * c as f64 / (n - 1) as f64
            }
        })
        .collect();
    let geometric: Vec<f64> = (0..n).map(|c| STEP_SKEW_RATIO.powi(-(c as i32))).collect();

    let (count_w, step_w) = match scheme.variant {
        Variant::Iid => (vec![1.0; n], vec![1.0; n]),
        Variant::EpisodeSkew => (staircase, vec![1.0; n]),
        Variant::StepSkew => (vec![1.0; n], geometric),
        Variant::BothSkew => (staircase, geometric),
        v => unreachable!("{v:?} is not a step-episode variant"),
    };
    let counts = apportion(total_eps, &count_w);
    if counts.contains(&0) {
        return infeasible(format!("{total_eps} episodes leave a client empty under {}", scheme.name()));
    }
    let step_sum: f64 = step_w.iter().sum();
    let step_targets: Vec<f64> = step_w.iter().map(|w| w / step_sum * total_steps as f64).collect();

    let mut order: Vec<usize> = (0..total_eps).collect();
    order.shuffle(rng);
    order.sort_by(|&a, &b| lens[b].cmp(&lens[a]));
    let mut clients = greedy_steps(&order, &lens, &counts, &step_targets);
    rebalance_steps(&mut clients, &lens, &step_targets);
    Ok(clients)
}

fn category_level(
    dataset: &[Episode],
    scheme: &PartitionScheme,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>> {
    let n = scheme.n_clients;
    let cats = Labels::new(dataset, Axis::Category);
    let apps = Labels::new(dataset, Axis::App);
    match scheme.variant {
        Variant::Iid => Ok(deal_iid(&apps.groups(rng), n)),
        Variant::Skew => {
            let m = one_label_per_client(&cats, n, "category")?;
            Ok(materialize(&m, &cats.groups(rng), n))
        }
        Variant::HalfSkew => {
            let m = half_skew(&cats, n, "category")?;
            Ok(materialize(&m, &cats.groups(rng), n))
        }
        Variant::NonUniform => {
            let m = non_uniform(&cats, n, rng, "category")?;
            Ok(materialize(&m, &cats.groups(rng), n))
        }
        Variant::AppSkew => {
            let groups = apps.groups(rng);
            let cat_of_app: Vec<usize> = (0..apps.len())
                .map(|a| cats.of[groups[a][0]])
                .collect();
            let mut clients = vec![Vec::new(); n];
            for c in 0..cats.len() {
                let members: Vec<(usize, usize)> = (0..apps.len())
                    .filter(|&a| cat_of_app[a] == c)
                    .map(|a| (a, groups[a].len()))
                    .collect();
                if members.len() < n {
                    return infeasible(format!(
                        "app-skew needs at least {n} apps per category: `{}` has {}",
                        cats.names[c],
                        members.len()
                    ));
                }
                let mut loads = vec![0usize; n];
                for (a, client) in assign_whole_apps(&members, &mut loads, rng) {
                    clients[client].extend(&groups[a]);
                }
            }
            Ok(clients)
        }
        Variant::AppRandom => {
            let groups = apps.groups(rng);
            if apps.len() < n {
                return infeasible(format!("app-random needs at least {n} apps, dataset has {}", apps.len()));
            }
            let sizes: Vec<(usize, usize)> = groups.iter().map(Vec::len).enumerate().collect();
            let mut loads = vec![0usize; n];
            let mut clients = vec![Vec::new(); n];
            for (a, client) in assign_whole_apps(&sizes, &mut loads, rng) {
                clients[client].extend(&groups[a]);
            }
            Ok(clients)
        }
        v => unreachable!("{v:?} is not a category-level variant"),
    }
}

fn app_level(dataset: &[Episode], scheme: &PartitionScheme, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let n = scheme.n_clients;
    let apps = Labels::new(dataset, Axis::App);
    let groups = apps.groups(rng);
    let matrix = match scheme.variant {
        Variant::Iid => return Ok(deal_iid(&groups, n)),
        Variant::Skew => one_label_per_client(&apps, n, "app")?,
        Variant::HalfSkew => half_skew(&apps, n, "app")?,
        Variant::NonUniform => non_uniform(&apps, n, rng, "app")?,
        v => unreachable!("{v:?} is not an app-level variant"),
    };
    Ok(materialize(&matrix, &groups, n))
}

/// Client sizes for the scaled family: with one app per client the client
/// sizes are the app sizes (so client `k` has the same size in every variant);
/// otherwise sizes are equal.
pub(crate) fn scaleapp_sizes(app_sizes: &[usize], n: usize) -> Vec<usize> {
    if app_sizes.len() == n {
        app_sizes.to_vec()
    } else {
        equal_sizes(app_sizes.iter().sum(), n)
    }
}

fn scale_app(dataset: &[Episode], scheme: &PartitionScheme, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let n = scheme.n_clients;
    let apps = Labels::new(dataset, Axis::App);
    let groups = apps.groups(rng);
    let app_sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let sizes = scaleapp_sizes(&app_sizes, n);
    let total = dataset.len() as f64;
    match scheme.variant {
        Variant::Skew => {
            let m = one_label_per_client(&apps, n, "app")?;
            Ok(materialize(&m, &groups, n))
        }
        Variant::Iid => {
            let target: Vec<Vec<f64>> = sizes
                .iter()
                .map(|&s| app_sizes.iter().map(|&a| s as f64 * a as f64 / total).collect())
                .collect();
            let m = controlled_round(&target, &sizes, &app_sizes);
            Ok(materialize(&m, &groups, n))
        }
        Variant::Random => {
            let mut all: Vec<usize> = (0..dataset.len()).collect();
            all.shuffle(rng);
            let mut it = all.into_iter();
            Ok(sizes.iter().map(|&s| it.by_ref().take(s).collect()).collect())
        }
        v => unreachable!("{v:?} is not a scaleapp variant"),
    }
}

/// Assigns every episode to one client under `scheme`.
pub fn partition(dataset: &[Episode], scheme: &PartitionScheme) -> Result<PartitionAssignment> {
    PartitionScheme::new(scheme.family, scheme.variant, scheme.n_clients, scheme.seed)?;
    if dataset.is_empty() {
        return Err(PartitionError::EmptyDataset);
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = dataset.iter().find(|e| !seen.insert(e.episode_id.as_str())) {
        return Err(PartitionError::CoverageMismatch(format!(
            "episode id `{}` appears twice in the dataset",
            dup.episode_id
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scheme.seed);
    let n = scheme.n_clients;
    let clients = match scheme.family {
        Family::BasicIid => {
            let mut all: Vec<usize> = (0..dataset.len()).collect();
            all.shuffle(&mut rng);
            let mut clients = vec![Vec::new(); n];
            for (i, e) in all.into_iter().enumerate() {
                clients[i % n].push(e);
            }
            clients
        }
        Family::StepEpisode => step_episode(dataset, scheme, &mut rng)?,
        Family::CategoryLevel => category_level(dataset, scheme, &mut rng)?,
        Family::AppLevel => app_level(dataset, scheme, &mut rng)?,
        Family::ScaleApp => scale_app(dataset, scheme, &mut rng)?,
    };
    let mut client_of = BTreeMap::new();
    for (c, eps) in clients.iter().enumerate() {
        for &e in eps {
            client_of.insert(dataset[e].episode_id.clone(), c);
        }
    }
    debug_assert_eq!(client_of.len(), dataset.len());
    Ok(PartitionAssignment {
        scheme: *scheme,
        client_of,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Offending client, when the rule is per client.
    pub client: Option<usize>,
    pub rule: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub scheme: String,
    pub ok: bool,
    pub violations: Vec<Violation>,
}

/// Coefficient of variation (population standard deviation over mean).
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

pub const SKEW_MIN_CV: f64 = 0.3;
pub const BALANCED_STEP_BAND: f64 = 0.10;

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn fail(&mut self, client: Option<usize>, rule: &str, detail: String) {
        self.violations.push(Violation {
            client,
            rule: rule.into(),
            detail,
        });
    }

    fn counts_within_one(&mut self, values: &[usize], rule: &str) {
        let (lo, hi) = (values.iter().min(), values.iter().max());
        if let (Some(&lo), Some(&hi)) = (lo, hi) {
            if hi - lo > 1 {
                let c = values.iter().position(|&v| v == hi);
                self.fail(c, rule, format!("counts range {lo}..={hi}"));
            }
        }
    }

    fn min_cv(&mut self, values: &[usize], rule: &str) {
        if values.len() < 2 {
            return;
        }
        let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
        let cv = coefficient_of_variation(&v);
        if cv < SKEW_MIN_CV {
            self.fail(None, rule, format!("coefficient of variation {cv:.4} < {SKEW_MIN_CV}"));
        }
    }

    fn within_band(&mut self, values: &[usize], rule: &str) {
        if values.is_empty() {
            return;
        }
        let mean = values.iter().sum::<usize>() as f64 / values.len() as f64;
        for (c, &v) in values.iter().enumerate() {
            if (v as f64 - mean).abs() > BALANCED_STEP_BAND * mean {
                self.fail(Some(c), rule, format!("{v} steps vs mean {mean:.1}"));
            }
        }
    }

    fn label_cardinality(&mut self, matrix: &DistributionMatrix, expected: usize, rule: &str) {
        let want = expected.min(matrix.labels.len());
        for (c, row) in matrix.counts.iter().enumerate() {
            let k = row.iter().filter(|&&x| x > 0).count();
            if k != want {
                self.fail(Some(c), rule, format!("holds {k} distinct labels, expected {want}"));
            }
        }
    }

    fn label_on_one_client(&mut self, matrix: &DistributionMatrix, rule: &str) {
        for (l, name) in matrix.labels.iter().enumerate() {
            let holders: Vec<usize> = (0..matrix.counts.len()).filter(|&c| matrix.counts[c][l] > 0).collect();
            if holders.len() > 1 {
                self.fail(Some(holders[1]), rule, format!("`{name}` spread over clients {holders:?}"));
            }
        }
    }

    fn all_labels_everywhere(&mut self, matrix: &DistributionMatrix, rule: &str) {
        for (c, row) in matrix.counts.iter().enumerate() {
            if let Some(l) = row.iter().position(|&x| x == 0) {
                self.fail(Some(c), rule, format!("never sees `{}`", matrix.labels[l]));
            }
        }
    }

    fn per_label_balanced(&mut self, matrix: &DistributionMatrix, rule: &str) {
        for (l, name) in matrix.labels.iter().enumerate() {
            let col: Vec<usize> = matrix.counts.iter().map(|r| r[l]).collect();
            let (lo, hi) = (col.iter().min().unwrap_or(&0), col.iter().max().unwrap_or(&0));
            if hi - lo > 1 {
                let c = col.iter().position(|x| x == hi);
                self.fail(c, rule, format!("`{name}` counts range {lo}..={hi}"));
            }
        }
    }
}

/// Re-checks coverage and the scheme's structural rules.
pub fn verify_partition(dataset: &[Episode], assignment: &PartitionAssignment) -> Result<VerificationReport> {
    let ids: BTreeSet<&str> = dataset.iter().map(|e| e.episode_id.as_str()).collect();
    if let Some(unknown) = assignment.client_of.keys().find(|k| !ids.contains(k.as_str())) {
        return Err(PartitionError::CoverageMismatch(format!(
            "assignment names unknown episode `{unknown}`"
        )));
    }
    if let Some(missing) = dataset.iter().find(|e| !assignment.client_of.contains_key(&e.episode_id)) {
        return Err(PartitionError::CoverageMismatch(format!(
            "episode `{}` is not assigned",
            missing.episode_id
        )));
    }
    if ids.len() != dataset.len() {
        return Err(PartitionError::CoverageMismatch("dataset has duplicate episode ids".into()));
    }

    let scheme = &assignment.scheme;
    let n = scheme.n_clients;
    let mut check = Checker { violations: Vec::new() };
    for (id, &c) in &assignment.client_of {
        if c >= n {
            check.fail(Some(c), "client-range", format!("episode `{id}` on client {c} >= {n}"));
        }
    }
    if !check.violations.is_empty() {
        return Ok(VerificationReport {
            scheme: scheme.name(),
            ok: false,
            violations: check.violations,
        });
    }

    let counts = client_counts(dataset, assignment);
    let eps: Vec<usize> = counts.iter().map(|c| c.episodes).collect();
    let steps: Vec<usize> = counts.iter().map(|c| c.steps).collect();
    let by_app = distribution_matrix(dataset, assignment, Axis::App);
    let by_cat = distribution_matrix(dataset, assignment, Axis::Category);

    use Variant::*;
    match (scheme.family, scheme.variant) {
        (Family::BasicIid, _) => check.counts_within_one(&eps, "iid-episode-counts"),
        (Family::StepEpisode, Iid) => {
            check.counts_within_one(&eps, "iid-episode-counts");
            check.within_band(&steps, "iid-step-totals");
        }
        (Family::StepEpisode, EpisodeSkew) => {
            check.within_band(&steps, "episode-skew-step-totals");
            check.min_cv(&eps, "episode-skew-episode-cv");
        }
        (Family::StepEpisode, StepSkew) => {
            check.counts_within_one(&eps, "step-skew-episode-counts");
            check.min_cv(&steps, "step-skew-step-cv");
        }
        (Family::StepEpisode, BothSkew) => {
            check.min_cv(&eps, "both-skew-episode-cv");
            check.min_cv(&steps, "both-skew-step-cv");
        }
        (Family::CategoryLevel, Iid) => check.per_label_balanced(&by_app, "iid-per-app-counts"),
        (Family::CategoryLevel, Skew) => {
            check.label_cardinality(&by_cat, 1, "skew-one-category");
            check.label_on_one_client(&by_cat, "skew-category-exclusive");
        }
        (Family::CategoryLevel, HalfSkew) => check.label_cardinality(&by_cat, 2, "half-skew-two-categories"),
        (Family::CategoryLevel, NonUniform) => check.all_labels_everywhere(&by_cat, "non-uniform-all-categories"),
        (Family::CategoryLevel, AppSkew) => {
            check.label_on_one_client(&by_app, "app-skew-app-exclusive");
            check.all_labels_everywhere(&by_cat, "app-skew-all-categories");
        }
        (Family::CategoryLevel, AppRandom) => check.label_on_one_client(&by_app, "app-random-app-exclusive"),
        (Family::AppLevel, Iid) => check.per_label_balanced(&by_app, "iid-per-app-counts"),
        (Family::AppLevel, Skew) | (Family::ScaleApp, Skew) => {
            check.label_cardinality(&by_app, 1, "skew-one-app");
            check.label_on_one_client(&by_app, "skew-app-exclusive");
        }
        (Family::AppLevel, HalfSkew) => check.label_cardinality(&by_app, 2, "half-skew-two-apps"),
        (Family::AppLevel, NonUniform) => check.all_labels_everywhere(&by_app, "non-uniform-all-apps"),
        (Family::ScaleApp, Iid) => {
            let total = dataset.len() as f64;
            let app_sizes: Vec<usize> = (0..by_app.labels.len())
                .map(|l| by_app.counts.iter().map(|r| r[l]).sum())
                .collect();
            for (c, row) in by_app.counts.iter().enumerate() {
                let size: usize = row.iter().sum();
                for (l, &x) in row.iter().enumerate() {
                    let target = size as f64 * app_sizes[l] as f64 / total;
                    if (x as f64 - target).abs() >= 1.0 + 1e-9 {
                        check.fail(
                            Some(c),
                            "scaleapp-iid-proportional",
                            format!("`{}`: {x} episodes vs proportional {target:.2}", by_app.labels[l]),
                        );
                    }
                }
            }
        }
        (Family::ScaleApp, Random) => {}
        (f, v) => unreachable!("{f:?}/{v:?} rejected at construction"),
    }
    Ok(VerificationReport {
        scheme: scheme.name(),
        ok: check.violations.is_empty(),
        violations: check.violations,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionMatrix {
    pub labels: Vec<String>,
    /// `counts[client][label]` episode counts.
    pub counts: Vec<Vec<usize>>,
}

impl DistributionMatrix {
    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Heatmap CSV: header `client,<labels...>`, one row per client.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["client".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (c, row) in self.counts.iter().enumerate() {
            let mut rec = vec![c.to_string()];
            rec.extend(row.iter().map(usize::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Client × label episode counts. Unassigned episodes are ignored.
pub fn distribution_matrix(dataset: &[Episode], assignment: &PartitionAssignment, axis: Axis) -> DistributionMatrix {
    let labels = Labels::new(dataset, axis);
    let mut counts = vec![vec![0usize; labels.len()]; assignment.scheme.n_clients];
    for (e, &l) in dataset.iter().zip(&labels.of) {
        if let Some(&c) = assignment.client_of.get(&e.episode_id) {
            if c < counts.len() {
                counts[c][l] += 1;
            }
        }
    }
    DistributionMatrix {
        labels: labels.names,
        counts,
    }
}

/// Per-client (episodes, steps).
pub fn client_counts(dataset: &[Episode], assignment: &PartitionAssignment) -> Vec<Counts> {
    let mut out = vec![Counts::default(); assignment.scheme.n_clients];
    for e in dataset {
        if let Some(&c) = assignment.client_of.get(&e.episode_id) {
            if let Some(slot) = out.get_mut(c) {
                slot.episodes += 1;
                slot.steps += e.len();
            }
        }
    }
    out
}

/// Per-client set of categories, handy for inspection.
pub fn client_categories(dataset: &[Episode], assignment: &PartitionAssignment) -> Vec<BTreeSet<Category>> {
    let mut out = vec![BTreeSet::new(); assignment.scheme.n_clients];
    for e in dataset {
        if let Some(&c) = assignment.client_of.get(&e.episode_id) {
            if let Some(set) = out.get_mut(c) {
                set.insert(e.category);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ActionType, AppCatalog, Step};
    use crate::synth::DatasetPreset;

    fn episode(id: usize, app: &str, len: usize) -> Episode {
        Episode {
            episode_id: format!("e{id:05}"),
            instruction: format!("use the {app} app"),
            app: app.into(),
            category: AppCatalog::builtin().lookup(app),
            steps: (0..len)
                .map(|i| Step {
                    index: i,
                    subgoal: String::new(),
                    action_type: ActionType::Click,
                    action_args: String::new(),
                })
                .collect(),
        }
    }

    fn app_level_data() -> Vec<Episode> {
        let apps = ["Amazon", "Clock", "eBay", "Flipkart", "Gmail"];
        (0..750).map(|i| episode(i, apps[i % 5], 1 + i % 9)).collect()
    }

    fn scheme(name: &str, n: usize) -> PartitionScheme {
        PartitionScheme::parse(name, n, 7).unwrap()
    }

    #[test]
    fn scheme_names_round_trip() {
        let names = PartitionScheme::all_names();
        assert_eq!(names.len(), 18);
        for name in names {
            assert_eq!(scheme(&name, 3).name(), name);
        }
        assert!(PartitionScheme::parse("app-level/app-skew", 5, 0).is_err());
        assert!(PartitionScheme::parse("nope/iid", 5, 0).is_err());
        assert!(PartitionScheme::parse("basic-iid", 0, 0).is_err());
    }

    #[test]
    fn single_client_passthrough() {
        let d = app_level_data();
        let a = partition(&d, &scheme("basic-iid", 1)).unwrap();
        assert!(a.client_of.values().all(|&c| c == 0));
        assert_eq!(a.client_of.len(), d.len());
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(partition(&[], &scheme("basic-iid", 2)), Err(PartitionError::EmptyDataset)));
    }

    #[test]
    fn app_level_skew_is_diagonal() {
        let d = app_level_data();
        let a = partition(&d, &scheme("app-level/skew", 5)).unwrap();
        let m = distribution_matrix(&d, &a, Axis::App);
        assert_eq!(m.labels, ["Amazon", "Clock", "eBay", "Flipkart", "Gmail"]);
        for (c, row) in m.counts.iter().enumerate() {
            for (l, &x) in row.iter().enumerate() {
                assert_eq!(x, if c == l { 150 } else { 0 });
            }
        }
        assert!(verify_partition(&d, &a).unwrap().ok);
    }

    #[test]
    fn category_skew_infeasible_with_more_clients() {
        let d = DatasetPreset::CategoryLevel.build(1).unwrap().train;
        let err = partition(&d, &scheme("category-level/skew", 7)).unwrap_err();
        assert!(matches!(err, PartitionError::InfeasibleScheme(_)));
    }

    #[test]
    fn category_level_all_variants() {
        let d = DatasetPreset::CategoryLevel.build(3).unwrap().train;
        for v in Family::CategoryLevel.variants() {
            let s = PartitionScheme::new(Family::CategoryLevel, *v, 5, 11).unwrap();
            let a = partition(&d, &s).unwrap();
            let r = verify_partition(&d, &a).unwrap();
            assert!(r.ok, "{}: {:?}", s.name(), r.violations);
            let counts = client_counts(&d, &a);
            assert!(counts.iter().all(|c| c.episodes == 200), "{}: {counts:?}", s.name());
        }
    }

    #[test]
    fn category_iid_cells_are_forty() {
        let d = DatasetPreset::CategoryLevel.build(3).unwrap().train;
        let a = partition(&d, &scheme("category-level/iid", 5)).unwrap();
        let m = distribution_matrix(&d, &a, Axis::Category);
        assert!(m.counts.iter().flatten().all(|&x| x == 40), "{:?}", m.counts);
    }

    #[test]
    fn planted_skew_violation_names_client() {
        let d = DatasetPreset::CategoryLevel.build(3).unwrap().train;
        let mut a = partition(&d, &scheme("category-level/skew", 5)).unwrap();
        // move one client-0 episode onto client 1
        let id = a.client_of.iter().find(|(_, &c)| c == 0).map(|(k, _)| k.clone()).unwrap();
        a.client_of.insert(id, 1);
        let r = verify_partition(&d, &a).unwrap();
        assert!(!r.ok);
        assert!(r.violations.iter().any(|v| v.client == Some(1) && v.rule == "skew-one-category"));
    }

    #[test]
    fn coverage_mismatch() {
        let d = app_level_data();
        let mut a = partition(&d, &scheme("basic-iid", 3)).unwrap();
        let first = a.client_of.keys().next().unwrap().clone();
        a.client_of.remove(&first);
        assert!(matches!(verify_partition(&d, &a), Err(PartitionError::CoverageMismatch(_))));
        let mut a = partition(&d, &scheme("basic-iid", 3)).unwrap();
        a.client_of.insert("ghost".into(), 0);
        assert!(matches!(verify_partition(&d, &a), Err(PartitionError::CoverageMismatch(_))));
    }

    #[test]
    fn client_counts_iid() {
        let d: Vec<Episode> = (0..10).map(|i| episode(i, "Amazon", 5)).collect();
        let a = partition(&d, &scheme("basic-iid", 5)).unwrap();
        assert!(client_counts(&d, &a).iter().all(|c| *c == Counts { episodes: 2, steps: 10 }));
    }

    #[test]
    fn step_episode_variants_verify() {
        let d = DatasetPreset::StepEpisode.build(5).unwrap().train;
        for v in Family::StepEpisode.variants() {
            let s = PartitionScheme::new(Family::StepEpisode, *v, 10, 2).unwrap();
            let a = partition(&d, &s).unwrap();
            let r = verify_partition(&d, &a).unwrap();
            assert!(r.ok, "{}: {:?}", s.name(), r.violations);
        }
        let a = partition(&d, &scheme("step-episode/both-skew", 10)).unwrap();
        let steps: Vec<usize> = client_counts(&d, &a).iter().map(|c| c.steps).collect();
        let mean = steps.iter().sum::<usize>() as f64 / steps.len() as f64;
        assert!(steps[0] as f64 > 2.0 * mean, "{steps:?}");
    }

    #[test]
    fn scaleapp_variants_verify() {
        let d = DatasetPreset::ScaleApp.build(5).unwrap().train;
        for v in Family::ScaleApp.variants() {
            let s = PartitionScheme::new(Family::ScaleApp, *v, 30, 2).unwrap();
            let a = partition(&d, &s).unwrap();
            let r = verify_partition(&d, &a).unwrap();
            assert!(r.ok, "{}: {:?}", s.name(), r.violations);
        }
        // clients with the same index have the same size in every variant
        let sizes: Vec<Vec<usize>> = Family::ScaleApp
            .variants()
            .iter()
            .map(|v| {
                let a = partition(&d, &PartitionScheme::new(Family::ScaleApp, *v, 30, 2).unwrap()).unwrap();
                client_counts(&d, &a).iter().map(|c| c.episodes).collect()
            })
            .collect();
        assert!(sizes.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn controlled_round_keeps_margins() {
        let target = vec![vec![0.5, 1.5, 1.0], vec![1.5, 0.5, 1.0]];
        let m = controlled_round(&target, &[3, 3], &[2, 2, 2]);
        for (i, row) in m.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), 3);
            for (j, &x) in row.iter().enumerate() {
                assert!((x as f64 - target[i][j]).abs() < 1.0);
            }
        }
        for j in 0..3 {
            assert_eq!(m[0][j] + m[1][j], 2);
        }
    }

    #[test]
    fn assignment_file_round_trip() {
        let d = app_level_data();
        let a = partition(&d, &scheme("app-level/half-skew", 5)).unwrap();
        let mut buf = Vec::new();
        a.write(&mut buf).unwrap();
        let back = PartitionAssignment::read(buf.as_slice()).unwrap();
        assert_eq!(back, a);
        let bare = PartitionAssignment::read("a\t0\nb\t2\n".as_bytes()).unwrap();
        assert_eq!(bare.scheme.n_clients, 3);
        assert!(PartitionAssignment::read("a\t0\na\t1\n".as_bytes()).is_err());
        assert!(PartitionAssignment::read("a 0\n".as_bytes()).is_err());
    }

    #[test]
    fn heatmap_csv_layout() {
        let d = app_level_data();
        let a = partition(&d, &scheme("app-level/skew", 5)).unwrap();
        let mut buf = Vec::new();
        distribution_matrix(&d, &a, Axis::App).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("client,Amazon,Clock,eBay,Flipkart,Gmail"));
        assert_eq!(lines.next(), Some("0,150,0,0,0,0"));
    }

    #[test]
    fn empty_dataset_matrix_is_zero() {
        let a = PartitionAssignment {
            scheme: scheme("basic-iid", 3),
            client_of: BTreeMap::new(),
        };
        let m = distribution_matrix(&[], &a, Axis::Category);
        assert_eq!(m.counts.len(), 3);
        assert!(m.counts.iter().flatten().all(|&x| x == 0));
    }
}
