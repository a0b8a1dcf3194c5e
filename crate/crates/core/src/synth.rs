//! Seeded synthetic episode generator and the dataset presets.
//!
//! The generator apportions episodes to apps by weight (largest remainder),
//! shuffles them, draws episode lengths from a geometric distribution
//! truncated to `[1, MAX_STEPS]`, and fills instructions, subgoals and action
//! arguments from a small templated vocabulary conditioned on the app. Each app
//! has a fixed behavioural "script" (the action it tends to take at each
//! position), followed with probability `1 - SCRIPT_NOISE`, so the action
//! prediction task is learnable and differs between apps.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ActionType, AppCatalog, Category, DataError, Episode, Result, Step};
use crate::hashing::fnv1a;

pub const MAX_STEPS: usize = 30;
const SCRIPT_NOISE: f64 = 0.2;
const SCRIPT_POSITIONS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_episodes: usize,
    /// (app, weight) in a fixed order; order only matters for tie-breaking.
    pub app_profile: Vec<(String, f64)>,
    pub mean_steps: f64,
    pub seed: u64,
    /// When set, episode lengths are nudged until they sum to exactly this.
    pub total_steps: Option<usize>,
    pub id_prefix: String,
    /// Category source for the profile's apps.
    #[serde(skip)]
    pub catalog: AppCatalog,
}

impl SyntheticSpec {
    pub fn new(n_episodes: usize, app_profile: Vec<(String, f64)>, mean_steps: f64, seed: u64) -> Self {
        Self {
            n_episodes,
            app_profile,
            mean_steps,
            seed,
            total_steps: None,
            id_prefix: "ep".into(),
            catalog: AppCatalog::builtin().clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DataError::InvalidSpec(m));
        if self.n_episodes == 0 {
            return bad("n_episodes must be at least 1".into());
        }
        if self.app_profile.is_empty() {
            return bad("app_profile is empty".into());
        }
        if self
            .app_profile
            .iter()
            .any(|(_, w)| !w.is_finite() || *w < 0.0)
        {
            return bad("app weights must be finite and nonnegative".into());
        }
        if self.app_profile.iter().map(|(_, w)| w).sum::<f64>() <= 0.0 {
            return bad("app weights are all zero".into());
        }
        let max_mean = (1 + MAX_STEPS) as f64 / 2.0;
        if !(1.0..=max_mean).contains(&self.mean_steps) {
            return bad(format!("mean_steps must lie in [1, {max_mean}]"));
        }
        if let Some(t) = self.total_steps {
            if t < self.n_episodes || t > self.n_episodes * MAX_STEPS {
                return bad(format!(
                    "total_steps {t} unreachable with {} episodes of 1..={MAX_STEPS} steps",
                    self.n_episodes
                ));
            }
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `total` by `weights`; ties go to the
/// earlier entry.
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Mean of a geometric distribution on `1..=max` truncated at `max`.
fn truncated_geometric_mean(p: f64, max: usize) -> f64 {
    let q = 1.0 - p;
    let (mut num, mut den, mut w) = (0.0, 0.0, 1.0);
    for k in 1..=max {
        num += k as f64 * w;
        den += w;
        w *= q;
    }
    num / den
}

/// Cumulative distribution of the truncated geometric whose mean is `mean`.
fn length_cdf(mean: f64) -> Vec<f64> {
    let (mut lo, mut hi) = (1e-12_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if truncated_geometric_mean(mid, MAX_STEPS) > mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = 1.0 - 0.5 * (lo + hi);
    let mut probs = Vec::with_capacity(MAX_STEPS);
    let mut w = 1.0;
    for _ in 0..MAX_STEPS {
        probs.push(w);
        w *= q;
    }
    let total: f64 = probs.iter().sum();
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p / total;
            acc
        })
        .collect()
}

fn draw_length(cdf: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    cdf.iter().position(|&c| u <= c).unwrap_or(cdf.len() - 1) + 1
}

struct Vocabulary {
    instructions: &'static [&'static str],
    objects: &'static [&'static str],
    targets: &'static [&'static str],
}

fn vocabulary(category: Category) -> Vocabulary {
    match category {
        Category::Shopping => Vocabulary {
            instructions: &[
                "Search for {obj} on the {app} app and add it to the cart",
                "Find the cheapest {obj} in the {app} app",
                "Check the reviews of {obj} using the {app} app",
            ],
            objects: &["running shoes", "headphones", "backpack", "rain jacket", "wrist watch", "yoga mat", "coffee mug", "phone case"],
            targets: &["search bar", "add to cart button", "filter menu", "product image", "sort option", "checkout button"],
        },
        Category::Traveling => Vocabulary {
            instructions: &[
                "Find a route to {obj} in the {app} app",
                "Book a trip to {obj} with the {app} app",
                "Look up hotels near {obj} on the {app} app",
            ],
            objects: &["the airport", "central station", "Paris", "the museum", "Tokyo", "the beach", "downtown", "Berlin"],
            targets: &["destination field", "date picker", "search button", "route option", "booking button", "map view"],
        },
        Category::Office => Vocabulary {
            instructions: &[
                "Create a note titled {obj} in the {app} app",
                "Set a reminder about {obj} using the {app} app",
                "Share the file {obj} from the {app} app",
            ],
            objects: &["meeting notes", "budget report", "weekly plan", "project update", "team agenda", "invoice", "alarm at seven", "contact card"],
            targets: &["compose button", "new item button", "title field", "save button", "share icon", "settings menu"],
        },
        Category::Lives => Vocabulary {
            instructions: &[
                "Look up a recipe for {obj} in the {app} app",
                "Start a session for {obj} with the {app} app",
                "Save {obj} to favourites in the {app} app",
            ],
            objects: &["pancakes", "morning stretch", "vegetable soup", "deep sleep", "basil plant", "tomato pasta", "breathing exercise", "green salad"],
            targets: &["search field", "start button", "favourite icon", "category tab", "timer control", "details card"],
        },
        Category::Entertainment | Category::Unknown => Vocabulary {
            instructions: &[
                "Play {obj} on the {app} app",
                "Find trending posts about {obj} in the {app} app",
                "Send a message about {obj} using the {app} app",
            ],
            objects: &["jazz music", "cooking videos", "world news", "street art", "football highlights", "travel vlogs", "cat videos", "science podcast"],
            targets: &["play button", "search icon", "feed tab", "share button", "comment box", "profile tab"],
        },
    }
}

const MID_ACTIONS: [ActionType; 8] = [
    ActionType::Click,
    ActionType::Click,
    ActionType::Scroll,
    ActionType::Type,
    ActionType::LongPress,
    ActionType::Wait,
    ActionType::NavigateBack,
    ActionType::Click,
];

/// The app's preferred (action, target slot, scroll direction) at a position.
fn scripted(app: &str, position: usize) -> (ActionType, usize, bool) {
    let pos = position.min(SCRIPT_POSITIONS - 1);
    let h = fnv1a(format!("script|{}|{pos}", app.to_lowercase()).as_bytes());
    let action = if pos == 0 {
        if h % 5 < 3 {
            ActionType::OpenApp
        } else {
            ActionType::Click
        }
    } else {
        MID_ACTIONS[(h % MID_ACTIONS.len() as u64) as usize]
    };
    (action, ((h >> 16) % 6) as usize, (h >> 32).is_multiple_of(2))
}

fn make_step(
    index: usize,
    action: ActionType,
    target: usize,
    scroll_down: bool,
    app: &str,
    object: &str,
    vocab: &Vocabulary,
) -> Step {
    let target = vocab.targets[target % vocab.targets.len()];
    let (args, subgoal) = match action {
        ActionType::Click => (target.to_string(), format!("Click on the {target}")),
        ActionType::LongPress => (target.to_string(), format!("Long press on the {target}")),
        ActionType::Type => (object.to_string(), format!("Type {object} into the {target}")),
        ActionType::Scroll => {
            let dir = if scroll_down { "down" } else { "up" };
            (dir.to_string(), format!("Scroll {dir} to see more"))
        }
        ActionType::OpenApp => (app.to_string(), format!("Open the {app} app")),
        ActionType::NavigateBack => (String::new(), "Go back to the previous screen".into()),
        ActionType::NavigateHome => (String::new(), "Go to the home screen".into()),
        ActionType::Wait => (String::new(), "Wait for the screen to load".into()),
        ActionType::Complete => (String::new(), "Mark the task as complete".into()),
    };
    Step {
        index,
        subgoal,
        action_type: action,
        action_args: args,
    }
}

fn build_episode(id: String, app: &str, category: Category, n_steps: usize, rng: &mut impl Rng) -> Episode {
    let vocab = vocabulary(category);
    let object = vocab.objects[rng.random_range(0..vocab.objects.len())];
    let template = vocab.instructions[rng.random_range(0..vocab.instructions.len())];
    let instruction = template.replace("{obj}", object).replace("{app}", app);
    let steps = (0..n_steps)
        .map(|i| {
            let (mut action, mut target, mut down) = scripted(app, i);
            if rng.random::<f64>() < SCRIPT_NOISE {
                action = ActionType::ALL[rng.random_range(0..ActionType::ALL.len())];
                target = rng.random_range(0..vocab.targets.len());
                down = rng.random();
            }
            make_step(i, action, target, down, app, object, &vocab)
        })
        .collect();
    Episode {
        episode_id: id,
        instruction,
        app: app.to_string(),
        category,
        steps,
    }
}

/// Nudges lengths one step at a time (seeded choice) until they sum to `target`.
fn adjust_total(lengths: &mut [usize], target: usize, rng: &mut impl Rng) {
    let mut total: usize = lengths.iter().sum();
    while total != target {
        let i = rng.random_range(0..lengths.len());
        if total < target && lengths[i] < MAX_STEPS {
            lengths[i] += 1;
            total += 1;
        } else if total > target && lengths[i] > 1 {
            lengths[i] -= 1;
            total -= 1;
        }
    }
}

/// Generates a deterministic dataset for `spec`.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec) -> Result<Vec<Episode>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weights: Vec<f64> = spec.app_profile.iter().map(|(_, w)| *w).collect();
    let quotas = apportion(spec.n_episodes, &weights);
    let mut apps: Vec<usize> = quotas
        .iter()
        .enumerate()
        .flat_map(|(i, &q)| std::iter::repeat_n(i, q))
        .collect();
    apps.shuffle(&mut rng);

    let cdf = length_cdf(spec.mean_steps);
    let mut lengths: Vec<usize> = (0..spec.n_episodes).map(|_| draw_length(&cdf, &mut rng)).collect();
    if let Some(target) = spec.total_steps {
        adjust_total(&mut lengths, target, &mut rng);
    }

    let width = spec.n_episodes.to_string().len().max(4);
    Ok(apps
        .iter()
        .zip(&lengths)
        .enumerate()
        .map(|(i, (&a, &n))| {
            let app = crate::data::normalize_app_name(&spec.app_profile[a].0);
            let category = spec.catalog.lookup(&app);
            build_episode(format!("{}-{:0width$}", spec.id_prefix, i), &app, category, n, &mut rng)
        })
        .collect())
}

/// Named dataset shapes mirroring the benchmark's dataset families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetPreset {
    /// Homogeneous pool over 877 apps, one of the six training sizes.
    BasicAc(usize),
    StepEpisode,
    CategoryLevel,
    AppLevel,
    ScaleApp,
}

pub const BASIC_AC_SIZES: [usize; 6] = [200, 500, 1000, 3000, 5000, 7000];

/// Train/test pair produced by a preset, plus the catalog covering its apps.
#[derive(Debug, Clone)]
pub struct PresetData {
    pub train: Vec<Episode>,
    pub test: Vec<Episode>,
    pub catalog: AppCatalog,
}

struct PresetShape {
    apps: Vec<(String, f64)>,
    catalog: AppCatalog,
    train: (usize, Option<usize>),
    test: (usize, Option<usize>),
    mean_steps: f64,
}

/// Long-tail apps beyond the catalog, spread round-robin over the categories.
fn long_tail(n: usize) -> (Vec<(String, f64)>, AppCatalog) {
    let mut catalog = AppCatalog::builtin().clone();
    let apps = (0..n)
        .map(|i| {
            let name = format!("Tailapp{:03}", i + 1);
            catalog
                .insert(&name, Category::NAMED[i % Category::NAMED.len()])
                .expect("named category");
            (name, 1.0)
        })
        .collect();
    (apps, catalog)
}

/// Catalog apps in file order: 10 per category, 12 for entertainment.
fn catalog_apps() -> Vec<(String, Category)> {
    include_str!("../data/catalog.tsv")
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('\t'))
        .map(|(a, c)| (a.to_string(), c.parse().expect("catalog category")))
        .collect()
}

impl DatasetPreset {
    pub const NAMES: [&'static str; 11] = [
        "basic-ac-200",
        "basic-ac-500",
        "basic-ac-1000",
        "basic-ac-3000",
        "basic-ac-5000",
        "basic-ac-7000",
        "step-episode",
        "category-level",
        "app-level",
        "scaleapp",
        "basic-ac",
    ];

    pub fn name(&self) -> String {
        match self {
            DatasetPreset::BasicAc(n) => format!("basic-ac-{n}"),
            DatasetPreset::StepEpisode => "step-episode".into(),
            DatasetPreset::CategoryLevel => "category-level".into(),
            DatasetPreset::AppLevel => "app-level".into(),
            DatasetPreset::ScaleApp => "scaleapp".into(),
        }
    }

    /// Default number of simulated clients for the family.
    pub fn default_clients(&self) -> usize {
        match self {
            DatasetPreset::BasicAc(_) | DatasetPreset::StepEpisode => 10,
            DatasetPreset::CategoryLevel | DatasetPreset::AppLevel => 5,
            DatasetPreset::ScaleApp => 30,
        }
    }

    fn shape(&self) -> PresetShape {
        let builtin = AppCatalog::builtin().clone();
        match *self {
            DatasetPreset::BasicAc(n) => {
                let (mut apps, catalog) = long_tail(877 - 52);
                apps.extend(catalog_apps().into_iter().map(|(a, _)| (a, 1.0)));
                let full = n == 7000;
                PresetShape {
                    apps,
                    catalog,
                    train: (n, full.then_some(47055)),
                    test: (n / 10, full.then_some(4648)),
                    mean_steps: 47055.0 / 7000.0,
                }
            }
            DatasetPreset::StepEpisode => {
                let (mut apps, catalog) = long_tail(293 - 52);
                apps.extend(catalog_apps().into_iter().map(|(a, _)| (a, 1.0)));
                PresetShape {
                    apps,
                    catalog,
                    train: (1000, Some(6685)),
                    test: (100, Some(635)),
                    mean_steps: 6.685,
                }
            }
            DatasetPreset::CategoryLevel => {
                let small = ["Snapchat", "SmartNews", "The Hindu", "CNN"];
                let apps = catalog_apps()
                    .into_iter()
                    .map(|(a, _)| {
                        let w = if small.contains(&a.as_str()) { 10.0 } else { 20.0 };
                        (a, w)
                    })
                    .collect();
                PresetShape {
                    apps,
                    catalog: builtin,
                    train: (1000, Some(7127)),
                    test: (100, Some(703)),
                    mean_steps: 7.127,
                }
            }
            DatasetPreset::AppLevel => PresetShape {
                apps: ["Amazon", "Clock", "eBay", "Flipkart", "Gmail"]
                    .iter()
                    .map(|a| (a.to_string(), 1.0))
                    .collect(),
                catalog: builtin,
                train: (750, Some(4456)),
                test: (100, Some(574)),
                mean_steps: 4456.0 / 750.0,
            },
            DatasetPreset::ScaleApp => {
                // six apps per category, interleaved, with decaying popularity
                let all = catalog_apps();
                let mut picked = Vec::new();
                for rank in 0..6 {
                    for cat in Category::NAMED {
                        let app = all.iter().filter(|(_, c)| *c == cat).nth(rank).expect("six per category");
                        picked.push(app.0.clone());
                    }
                }
                let apps = picked
                    .into_iter()
                    .enumerate()
                    .map(|(i, a)| (a, 1.0 / (i as f64 + 4.0)))
                    .collect();
                PresetShape {
                    apps,
                    catalog: builtin,
                    train: (2500, Some(15700)),
                    test: (250, Some(1691)),
                    mean_steps: 15700.0 / 2500.0,
                }
            }
        }
    }

    /// Builds the train and test datasets for `seed`.
    pub fn build(&self, seed: u64) -> Result<PresetData> {
        self.build_with(seed, None)
    }

    /// Like [`build`](Self::build), optionally overriding the training size.
    /// An override drops the exact step-total target.
    pub fn build_with(&self, seed: u64, n_train: Option<usize>) -> Result<PresetData> {
        let shape = self.shape();
        let (train_n, train_total) = match n_train {
            Some(n) => (n, None),
            None => shape.train,
        };
        let make = |n: usize, total: Option<usize>, seed: u64, prefix: &str| {
            let mut spec = SyntheticSpec::new(n, shape.apps.clone(), shape.mean_steps, seed);
            spec.total_steps = total;
            spec.id_prefix = prefix.into();
            spec.catalog = shape.catalog.clone();
            generate_synthetic_dataset(&spec)
        };
        let train = make(train_n, train_total, seed, "train")?;
        let test_n = if n_train.is_some() { (train_n / 10).max(1) } else { shape.test.0 };
        let test_total = if n_train.is_some() { None } else { shape.test.1 };
        let test = make(test_n, test_total, crate::hashing::derive_seed(seed, &[0x7e57]), "test")?;
        Ok(PresetData {
            train,
            test,
            catalog: shape.catalog,
        })
    }
}

impl std::str::FromStr for DatasetPreset {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_lowercase();
        match s.as_str() {
            "step-episode" => return Ok(DatasetPreset::StepEpisode),
            "category-level" => return Ok(DatasetPreset::CategoryLevel),
            "app-level" => return Ok(DatasetPreset::AppLevel),
            "scaleapp" | "scale-app" => return Ok(DatasetPreset::ScaleApp),
            "basic-ac" => return Ok(DatasetPreset::BasicAc(7000)),
            _ => {}
        }
        s.strip_prefix("basic-ac-")
            .and_then(|n| n.parse().ok())
            .filter(|n| BASIC_AC_SIZES.contains(n))
            .map(DatasetPreset::BasicAc)
            .ok_or_else(|| {
                DataError::InvalidSpec(format!(
                    "unknown preset `{s}` (expected one of {})",
                    DatasetPreset::NAMES.join(", ")
                ))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset_stats;

    fn spec(n: usize, mean: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec::new(
            n,
            vec![("Amazon".into(), 1.0), ("Gmail".into(), 3.0)],
            mean,
            seed,
        )
    }

    #[test]
    fn rejects_invalid_specs() {
        for s in [
            spec(0, 5.0, 1),
            spec(10, 0.5, 1),
            spec(10, 16.0, 1),
            SyntheticSpec::new(10, vec![("A".into(), 0.0)], 5.0, 1),
            SyntheticSpec::new(10, vec![("A".into(), -1.0), ("B".into(), 2.0)], 5.0, 1),
            SyntheticSpec::new(10, vec![], 5.0, 1),
        ] {
            assert!(matches!(generate_synthetic_dataset(&s), Err(DataError::InvalidSpec(_))));
        }
        let mut s = spec(10, 5.0, 1);
        s.total_steps = Some(5);
        assert!(generate_synthetic_dataset(&s).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate_synthetic_dataset(&spec(50, 6.7, 9)).unwrap();
        let b = generate_synthetic_dataset(&spec(50, 6.7, 9)).unwrap();
        let c = generate_synthetic_dataset(&spec(50, 6.7, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn mean_length_close_to_request() {
        for mean in [1.0, 3.0, 6.7, 12.0] {
            let d = generate_synthetic_dataset(&spec(2000, mean, 3)).unwrap();
            let got = dataset_stats(&d).n_steps as f64 / d.len() as f64;
            assert!((got - mean).abs() <= 0.1 * mean, "mean {mean} got {got}");
            assert!(d.iter().all(|e| (1..=MAX_STEPS).contains(&e.len())));
        }
    }

    #[test]
    fn apps_follow_weights_exactly() {
        let d = generate_synthetic_dataset(&spec(100, 4.0, 1)).unwrap();
        let s = dataset_stats(&d);
        assert_eq!(s.per_app["Amazon"].episodes, 25);
        assert_eq!(s.per_app["Gmail"].episodes, 75);
    }

    #[test]
    fn apportion_largest_remainder() {
        assert_eq!(apportion(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(apportion(7, &[0.0, 2.0, 5.0]), vec![0, 2, 5]);
        assert_eq!(apportion(5, &[]), Vec::<usize>::new());
    }

    #[test]
    fn exact_step_total() {
        let mut s = spec(300, 6.0, 4);
        s.total_steps = Some(2222);
        let d = generate_synthetic_dataset(&s).unwrap();
        assert_eq!(dataset_stats(&d).n_steps, 2222);
    }

    #[test]
    fn category_level_preset_shape() {
        let p = DatasetPreset::CategoryLevel.build(1).unwrap();
        let s = dataset_stats(&p.train);
        assert_eq!((s.n_episodes, s.n_steps, s.n_apps, s.n_categories), (1000, 7127, 52, 5));
        assert!(s.per_category.values().all(|c| c.episodes == 200));
        assert_eq!(s.per_app["Amazon"].episodes, 20);
        assert_eq!(s.per_app["CNN"].episodes, 10);
        let t = dataset_stats(&p.test);
        assert_eq!((t.n_episodes, t.n_steps), (100, 703));
    }

    #[test]
    fn other_preset_shapes() {
        let cases: [(DatasetPreset, usize, usize, usize, usize, usize); 3] = [
            (DatasetPreset::AppLevel, 750, 4456, 5, 100, 574),
            (DatasetPreset::ScaleApp, 2500, 15700, 30, 250, 1691),
            (DatasetPreset::StepEpisode, 1000, 6685, 293, 100, 635),
        ];
        for (preset, n, steps, apps, tn, tsteps) in cases {
            let p = preset.build(2).unwrap();
            let s = dataset_stats(&p.train);
            assert_eq!((s.n_episodes, s.n_steps, s.n_apps), (n, steps, apps), "{preset:?}");
            let t = dataset_stats(&p.test);
            assert_eq!((t.n_episodes, t.n_steps), (tn, tsteps), "{preset:?}");
            assert!(p.train.iter().all(|e| e.category != Category::Unknown));
        }
        let p = DatasetPreset::AppLevel.build(2).unwrap();
        assert!(dataset_stats(&p.train).per_app.values().all(|c| c.episodes == 150));
        assert!(dataset_stats(&p.test).per_app.values().all(|c| c.episodes == 20));
    }

    #[test]
    fn preset_names_parse() {
        for name in DatasetPreset::NAMES {
            let p: DatasetPreset = name.parse().unwrap();
            if name != "basic-ac" {
                assert_eq!(p.name(), name);
            }
        }
        assert!("basic-ac-123".parse::<DatasetPreset>().is_err());
        assert!("nope".parse::<DatasetPreset>().is_err());
    }

    #[test]
    fn generated_instructions_name_the_app() {
        let d = generate_synthetic_dataset(&spec(20, 4.0, 5)).unwrap();
        for e in &d {
            let v = serde_json::to_value(e).unwrap();
            let mut raw = v.clone();
            raw.as_object_mut().unwrap().remove("app");
            raw["steps"] = serde_json::json!([{"action_type": "click"}]);
            assert_eq!(crate::data::extract_app_name(&raw).as_deref(), Some(e.app.as_str()));
        }
    }
}
