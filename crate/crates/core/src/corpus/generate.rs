use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{
    ContactTypeTree, CorpusError, LabeledTicket, NodeId, ReplyTemplateBank, TemplateId, Ticket,
    MAX_MESSAGE_CHARS,
};
use crate::textprep;

const PRODUCT_TYPES: &[&str] = &["standard", "pool", "delivery", "black", "xl", "freight"];
const USER_TYPES: &[&str] = &["rider", "driver", "eater", "courier", "restaurant"];
const TRIP_STATUSES: &[&str] = &["completed", "canceled", "in_progress", "scheduled"];
const COUNTRIES: &[(&str, &[&str])] = &[
    ("us", &["san_francisco", "new_york", "chicago", "austin"]),
    ("br", &["sao_paulo", "rio"]),
    ("in", &["delhi", "mumbai", "bangalore"]),
    ("gb", &["london", "manchester"]),
    ("mx", &["mexico_city", "guadalajara"]),
];

const NOISE_WORDS: &[&str] = &[
    "please", "help", "today", "yesterday", "app", "thanks", "hello", "again", "really", "still",
    "time", "issue", "problem", "soon", "asap", "phone", "message", "reply", "support", "team",
    "morning", "evening", "night", "week", "tonight", "friend", "work", "home", "city", "street",
    "look", "check", "know", "think", "want", "need", "tried", "happened", "something", "everything",
    "okay", "sure", "maybe", "never", "always", "sorry", "urgent", "quick", "update", "details",
    "screen", "button", "email", "number", "account", "minute", "hour", "earlier", "later", "kind",
];

const OPENERS: &[&str] = &["hi", "hello", "hey", "dear support", "good morning", ""];
const CONNECTORS: &[&str] = &["and", "but", "so", "because", "then", "also", "the", "my", "it", "was", "is"];

fn default_depth() -> usize {
    3
}
fn default_fanout() -> usize {
    4
}
fn default_true() -> bool {
    true
}
fn default_templates_per_class() -> usize {
    2
}
fn default_keywords_per_class() -> usize {
    6
}
fn default_template_keywords() -> usize {
    3
}
fn default_ticket_count() -> usize {
    2000
}
fn default_skew() -> f64 {
    1.0
}
fn default_keywords_per_message() -> [usize; 2] {
    [1, 3]
}
fn default_noise_per_message() -> [usize; 2] {
    [4, 10]
}
fn default_specific_prob() -> f64 {
    0.8
}
fn default_template_keyword_prob() -> f64 {
    0.7
}
fn default_metadata_signal() -> f64 {
    0.6
}
fn default_noise_vocab() -> usize {
    300
}
fn default_template_skew() -> f64 {
    0.5
}

/// Parameters of the synthetic corpus.
///
/// A class's keyword pool is its own specific words plus the specific
/// words of its non-root ancestors; `specific_keyword_prob` controls how
/// often a drawn keyword comes from the class itself rather than from an
/// ancestor, which sets how separable siblings are from their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(default = "default_depth")]
    pub tree_depth: usize,
    #[serde(default = "default_fanout")]
    pub tree_fanout: usize,
    /// Number of labeled contact types; `None` labels every candidate node.
    #[serde(default)]
    pub num_classes: Option<usize>,
    /// Whether internal (non-leaf, non-root) nodes can be labels.
    #[serde(default = "default_true")]
    pub label_internal_nodes: bool,
    #[serde(default = "default_templates_per_class")]
    pub templates_per_class: usize,
    #[serde(default = "default_keywords_per_class")]
    pub keywords_per_class: usize,
    #[serde(default = "default_template_keywords")]
    pub keywords_per_template: usize,
    /// Explicit keyword pools keyed by contact-type id; overrides the
    /// generated pseudo-words for the listed nodes.
    #[serde(default)]
    pub keyword_pools: BTreeMap<String, Vec<String>>,
    #[serde(default = "default_ticket_count")]
    pub ticket_count: usize,
    /// Class frequency is proportional to `1 / rank^skew_exponent`.
    #[serde(default = "default_skew")]
    pub skew_exponent: f64,
    #[serde(default = "default_keywords_per_message")]
    pub keywords_per_message: [usize; 2],
    #[serde(default = "default_noise_per_message")]
    pub noise_per_message: [usize; 2],
    #[serde(default = "default_specific_prob")]
    pub specific_keyword_prob: f64,
    #[serde(default = "default_template_keyword_prob")]
    pub template_keyword_prob: f64,
    /// Probability a metadata field takes its class-preferred value.
    #[serde(default = "default_metadata_signal")]
    pub metadata_signal: f64,
    /// Probability that a ticket which would have a trip loses it.
    #[serde(default)]
    pub missing_rate: f64,
    /// Probability that a message keyword is wrapped in an HTML tag.
    #[serde(default)]
    pub html_rate: f64,
    #[serde(default = "default_noise_vocab")]
    pub noise_vocab_size: usize,
    /// Within-class template frequency skew.
    #[serde(default = "default_template_skew")]
    pub template_skew: f64,
    /// Template slot `j` of every class shares one keyword set, so a
    /// template is identified by its contact type plus its intent words.
    #[serde(default)]
    pub shared_template_intents: bool,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            tree_depth: default_depth(),
            tree_fanout: default_fanout(),
            num_classes: None,
            label_internal_nodes: true,
            templates_per_class: default_templates_per_class(),
            keywords_per_class: default_keywords_per_class(),
            keywords_per_template: default_template_keywords(),
            keyword_pools: BTreeMap::new(),
            ticket_count: default_ticket_count(),
            skew_exponent: default_skew(),
            keywords_per_message: default_keywords_per_message(),
            noise_per_message: default_noise_per_message(),
            specific_keyword_prob: default_specific_prob(),
            template_keyword_prob: default_template_keyword_prob(),
            metadata_signal: default_metadata_signal(),
            missing_rate: 0.0,
            html_rate: 0.0,
            noise_vocab_size: default_noise_vocab(),
            template_skew: default_template_skew(),
            shared_template_intents: false,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::InvalidSpec(m.to_string()));
        if self.tree_depth < 2 {
            // A single root leaves nothing to label.
            if self.tree_depth < 1 {
                return bad("tree_depth must be >= 1");
            }
            return bad("tree_depth must be >= 2 so that non-root contact types exist");
        }
        if self.tree_fanout < 1 {
            return bad("tree_fanout must be >= 1");
        }
        if self.templates_per_class < 1 {
            return bad("templates_per_class must be >= 1");
        }
        if self.keywords_per_class < 1 && self.keyword_pools.is_empty() {
            return bad("keyword pools are empty (keywords_per_class = 0)");
        }
        if self.keyword_pools.values().any(Vec::is_empty) {
            return bad("explicit keyword pools must not be empty");
        }
        if self.keywords_per_message[0] < 1 || self.keywords_per_message[0] > self.keywords_per_message[1] {
            return bad("keywords_per_message must be [min, max] with 1 <= min <= max");
        }
        if self.noise_per_message[0] > self.noise_per_message[1] {
            return bad("noise_per_message must be [min, max] with min <= max");
        }
        for (name, p) in [
            ("specific_keyword_prob", self.specific_keyword_prob),
            ("template_keyword_prob", self.template_keyword_prob),
            ("metadata_signal", self.metadata_signal),
            ("missing_rate", self.missing_rate),
            ("html_rate", self.html_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must be within [0, 1]"));
            }
        }
        if !self.skew_exponent.is_finite() || self.skew_exponent < 0.0 {
            return bad("skew_exponent must be finite and >= 0");
        }
        if self.ticket_count == 0 {
            return bad("ticket_count must be >= 1");
        }
        Ok(())
    }
}

/// A generated corpus. `class_order` lists the labeled contact types by
/// configured frequency rank, most frequent first.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub tree: ContactTypeTree,
    pub bank: ReplyTemplateBank,
    pub tickets: Vec<LabeledTicket>,
    pub class_order: Vec<NodeId>,
    /// Keyword pool per labeled contact type (own words plus ancestors').
    pub keyword_pools: BTreeMap<NodeId, Vec<String>>,
}

struct ClassProfile {
    node: NodeId,
    own: Vec<String>,
    inherited: Vec<String>,
    product: usize,
    user: usize,
    country: usize,
    trip_status: usize,
    trip_prob: f64,
    eta_mean: f64,
    templates: Vec<TemplateId>,
    template_weights: Vec<f64>,
}

/// Builds a deterministic synthetic corpus; a pure function of `(spec, seed)`.
pub fn generate_corpus(spec: &GeneratorSpec, seed: u64) -> Result<Corpus, CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = ContactTypeTree::complete(spec.tree_depth, spec.tree_fanout)?;

    for id in spec.keyword_pools.keys() {
        match tree.lookup(id) {
            Some(n) if n != tree.root() => {}
            _ => {
                return Err(CorpusError::InvalidSpec(format!(
                    "keyword pool for unknown or root contact type {id:?}"
                )))
            }
        }
    }

    let mut candidates: Vec<NodeId> = tree
        .nodes()
        .filter(|&n| n != tree.root() && (spec.label_internal_nodes || tree.is_leaf(n)))
        .collect();
    if let Some(k) = spec.num_classes {
        if k == 0 || k > candidates.len() {
            return Err(CorpusError::InvalidSpec(format!(
                "num_classes = {k} but the tree offers {} labelable nodes",
                candidates.len()
            )));
        }
        candidates.shuffle(&mut rng);
        candidates.truncate(k);
        candidates.sort();
    }

    // Specific keywords for every non-root node; labeled or not, ancestors
    // contribute their words to descendants' pools.
    let mut words = WordFactory::new();
    let mut specific: Vec<Vec<String>> = vec![Vec::new(); tree.len()];
    for node in tree.nodes().filter(|&n| n != tree.root()) {
        specific[node.0] = match spec.keyword_pools.get(tree.id(node)) {
            Some(pool) => {
                for w in pool {
                    words.reserve(w);
                }
                pool.clone()
            }
            None => (0..spec.keywords_per_class).map(|_| words.fresh(&mut rng)).collect(),
        };
    }

    let intents: Vec<Vec<String>> = if spec.shared_template_intents {
        (0..spec.templates_per_class).map(|_| (0..spec.keywords_per_template).map(|_| words.fresh(&mut rng)).collect()).collect()
    } else {
        Vec::new()
    };
    let mut templates = Vec::new();
    let mut allowed: BTreeMap<NodeId, Vec<TemplateId>> = BTreeMap::new();
    let mut profiles = Vec::with_capacity(candidates.len());
    for &node in &candidates {
        let inherited: Vec<String> = tree
            .path_to(node)
            .iter()
            .filter(|&&n| n != tree.root() && n != node)
            .flat_map(|n| specific[n.0].iter().cloned())
            .collect();
        let own = specific[node.0].clone();

        let mut class_templates = Vec::new();
        for j in 0..spec.templates_per_class {
            let tid = TemplateId(templates.len());
            let tkw: Vec<String> = match intents.get(j) {
                Some(shared) => shared.clone(),
                None => (0..spec.keywords_per_template).map(|_| words.fresh(&mut rng)).collect(),
            };
            let text = template_text(&own, &tkw, j, &mut rng);
            templates.push((format!("RT{}", tid.0), text, tkw));
            class_templates.push(tid);
        }
        allowed.insert(node, class_templates.clone());

        let country = rng.random_range(0..COUNTRIES.len());
        profiles.push(ClassProfile {
            node,
            own,
            inherited,
            product: rng.random_range(0..PRODUCT_TYPES.len()),
            user: rng.random_range(0..USER_TYPES.len()),
            country,
            trip_status: rng.random_range(0..TRIP_STATUSES.len()),
            trip_prob: rng.random_range(0.2..0.95),
            eta_mean: rng.random_range(3.0..30.0),
            template_weights: (0..class_templates.len())
                .map(|j| 1.0 / ((j + 1) as f64).powf(spec.template_skew))
                .collect(),
            templates: class_templates,
        });
    }

    let noise: Vec<String> = NOISE_WORDS
        .iter()
        .map(|s| s.to_string())
        .chain((0..spec.noise_vocab_size).map(|_| words.fresh(&mut rng)))
        .collect();

    // Frequency rank: seeded order over the labeled classes, with counts
    // apportioned deterministically so the histogram is monotone in rank.
    let mut order: Vec<usize> = (0..profiles.len()).collect();
    order.shuffle(&mut rng);
    let weights: Vec<f64> =
        (0..order.len()).map(|r| 1.0 / ((r + 1) as f64).powf(spec.skew_exponent)).collect();
    let counts = apportion(spec.ticket_count, &weights);
    let mut assignment: Vec<usize> = Vec::with_capacity(spec.ticket_count);
    for (rank, &count) in counts.iter().enumerate() {
        assignment.extend(std::iter::repeat_n(order[rank], count));
    }
    assignment.shuffle(&mut rng);

    let base = Utc.with_ymd_and_hms(2018, 1, 1, 0, 0, 0).unwrap();
    let exp = Exp::new(1.0).unwrap();
    let mut tickets = Vec::with_capacity(spec.ticket_count);
    for (i, &class) in assignment.iter().enumerate() {
        let p = &profiles[class];
        let tpl = weighted_pick(&p.templates, &p.template_weights, &mut rng);
        let tpl_words = &templates[tpl.0].2;
        let message = compose_message(spec, p, tpl_words, &noise, &mut rng);

        let pick = |pref: usize, n: usize, rng: &mut ChaCha8Rng| {
            if rng.random_bool(spec.metadata_signal) {
                pref
            } else {
                rng.random_range(0..n)
            }
        };
        let product = pick(p.product, PRODUCT_TYPES.len(), &mut rng);
        let user = pick(p.user, USER_TYPES.len(), &mut rng);
        let country = pick(p.country, COUNTRIES.len(), &mut rng);
        let cities = COUNTRIES[country].1;
        let city = cities[rng.random_range(0..cities.len())];
        let mut has_trip = rng.random_bool(p.trip_prob);
        if has_trip && spec.missing_rate > 0.0 && rng.random_bool(spec.missing_rate) {
            has_trip = false;
        }
        let (trip_status, eta_minutes) = if has_trip {
            let status = pick(p.trip_status, TRIP_STATUSES.len(), &mut rng);
            let eta: f64 = p.eta_mean * exp.sample(&mut rng);
            (TRIP_STATUSES[status].to_string(), Some((eta * 10.0).round() / 10.0))
        } else {
            ("none".to_string(), None)
        };
        let created_at: DateTime<Utc> = base + Duration::seconds(rng.random_range(0..180 * 86_400));

        tickets.push(LabeledTicket {
            ticket: Ticket {
                id: format!("T{:07}", i + 1),
                message,
                created_at,
                product_type: PRODUCT_TYPES[product].to_string(),
                user_type: USER_TYPES[user].to_string(),
                country: COUNTRIES[country].0.to_string(),
                city: city.to_string(),
                eta_minutes,
                trip_status,
                has_trip,
            },
            contact_type: p.node,
            reply_template: tpl,
        });
    }

    let keyword_pools = profiles
        .iter()
        .map(|p| (p.node, p.own.iter().chain(&p.inherited).cloned().collect()))
        .collect();
    let class_order = order.iter().map(|&c| profiles[c].node).collect();
    let bank = ReplyTemplateBank::new(
        templates.into_iter().map(|(id, text, _)| (id, text)).collect(),
        allowed,
    )?;
    Ok(Corpus { tree, bank, tickets, class_order, keyword_pools })
}

/// Largest-remainder apportionment of `total` by `weights`.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut by_rem: Vec<usize> = (0..weights.len()).collect();
    // Stable sort keeps lower ranks first on equal remainders, preserving monotonicity.
    by_rem.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap()
    });
    for &i in &by_rem {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

fn weighted_pick<T: Copy>(items: &[T], weights: &[f64], rng: &mut ChaCha8Rng) -> T {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random_range(0.0..total);
    for (item, w) in items.iter().zip(weights) {
        if x < *w {
            return *item;
        }
        x -= w;
    }
    *items.last().unwrap()
}

fn compose_message(
    spec: &GeneratorSpec,
    p: &ClassProfile,
    template_words: &[String],
    noise: &[String],
    rng: &mut ChaCha8Rng,
) -> String {
    let n_kw = rng.random_range(spec.keywords_per_message[0]..=spec.keywords_per_message[1]);
    let n_noise = rng.random_range(spec.noise_per_message[0]..=spec.noise_per_message[1]);

    let mut keywords: Vec<&str> = Vec::with_capacity(n_kw + 1);
    // At least one keyword always comes from the class's own pool.
    keywords.push(p.own.choose(rng).unwrap());
    for _ in 1..n_kw {
        let from_own = p.inherited.is_empty() || rng.random_bool(spec.specific_keyword_prob);
        let pool = if from_own { &p.own } else { &p.inherited };
        keywords.push(pool.choose(rng).unwrap());
    }
    if !template_words.is_empty() && rng.random_bool(spec.template_keyword_prob) {
        keywords.push(template_words.choose(rng).unwrap());
    }

    let mut body: Vec<String> = keywords
        .iter()
        .map(|k| {
            if spec.html_rate > 0.0 && rng.random_bool(spec.html_rate) {
                let tag = ["b", "i", "em", "strong"].choose(rng).unwrap();
                format!("<{tag}>{k}</{tag}>")
            } else {
                k.to_string()
            }
        })
        .collect();
    for _ in 0..n_noise {
        if rng.random_bool(0.35) {
            body.push(CONNECTORS.choose(rng).unwrap().to_string());
        } else {
            body.push(noise.choose(rng).unwrap().clone());
        }
    }
    body.shuffle(rng);

    let opener = OPENERS.choose(rng).unwrap();
    let mut message = if opener.is_empty() {
        body.join(" ")
    } else {
        format!("{opener}, {}", body.join(" "))
    };
    message.push('.');
    if message.chars().count() > MAX_MESSAGE_CHARS {
        message = message.chars().take(MAX_MESSAGE_CHARS).collect();
    }
    message
}

fn template_text(class_words: &[String], template_words: &[String], variant: usize, rng: &mut ChaCha8Rng) -> String {
    let mut words: Vec<&str> = template_words.iter().map(String::as_str).collect();
    words.extend(class_words.choose_multiple(rng, 2.min(class_words.len())).map(String::as_str));
    words.shuffle(rng);
    let lead = ["Thanks for reaching out about", "We are sorry to hear about", "We looked into"][variant % 3];
    format!("{lead} the {}. Our team has taken care of it.", words.join(" "))
}

/// Produces unique pseudo-words that survive normalization unchanged.
struct WordFactory {
    used: HashSet<String>,
}

impl WordFactory {
    fn new() -> Self {
        Self { used: HashSet::new() }
    }

    fn reserve(&mut self, w: &str) {
        self.used.insert(textprep::normalize(&w.to_lowercase()));
    }

    fn fresh(&mut self, rng: &mut ChaCha8Rng) -> String {
        const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "kr", "tr", "pl", "st"];
        const VOWELS: &[&str] = &["a", "o", "u", "i"];
        loop {
            let syllables = rng.random_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS.choose(rng).unwrap());
                w.push_str(VOWELS.choose(rng).unwrap());
            }
            if textprep::normalize(&w) != w || textprep::is_stop_word(&w) || NOISE_WORDS.contains(&w.as_str()) {
                continue;
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorSpec {
        GeneratorSpec { ticket_count: 300, ..Default::default() }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate_corpus(&small(), 11).unwrap();
        let b = generate_corpus(&small(), 11).unwrap();
        assert_eq!(a.tickets, b.tickets);
        assert_eq!(a.bank, b.bank);
        let c = generate_corpus(&small(), 12).unwrap();
        assert_ne!(a.tickets, c.tickets);
    }

    #[test]
    fn every_message_has_an_own_keyword() {
        let spec = GeneratorSpec { html_rate: 0.3, ..small() };
        let c = generate_corpus(&spec, 3).unwrap();
        for lt in &c.tickets {
            lt.ticket.validate().unwrap();
            let text = textprep::strip_html(&lt.ticket.message);
            let pool = &c.keyword_pools[&lt.contact_type];
            assert!(pool.iter().any(|k| text.split(|ch: char| !ch.is_alphanumeric()).any(|w| w == k)));
            assert!(c.bank.is_allowed(lt.contact_type, lt.reply_template));
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        for spec in [
            GeneratorSpec { tree_depth: 0, ..small() },
            GeneratorSpec { tree_fanout: 0, ..small() },
            GeneratorSpec { keywords_per_class: 0, ..small() },
        ] {
            assert!(matches!(generate_corpus(&spec, 1), Err(CorpusError::InvalidSpec(_))));
        }
    }

    #[test]
    fn apportion_is_exact_and_monotone() {
        let w: Vec<f64> = (0..7).map(|r| 1.0 / (r as f64 + 1.0)).collect();
        let c = apportion(1001, &w);
        assert_eq!(c.iter().sum::<usize>(), 1001);
        assert!(c.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn missingness_drops_trips() {
        let spec = GeneratorSpec { missing_rate: 1.0, ..small() };
        let c = generate_corpus(&spec, 5).unwrap();
        assert!(c.tickets.iter().all(|t| !t.ticket.has_trip && t.ticket.eta_minutes.is_none()));
    }
}
