//! Built-in haystack text: topic paragraphs from a fixed-seed grammar.
//!
//! The vocabulary avoids every word used by the pizza needles and the
//! BABILong-style fact templates, so a needle never collides with filler.

use std::sync::OnceLock;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chunker::count_tokens;

/// Size of the built-in filler.
pub const SYNTHETIC_TOKENS: usize = 60_000;
const FILLER_SEED: u64 = 0x5eed_f111;
/// Distance between distractor blocks in the adversarial filler.
pub const DISTRACTOR_SPACING: usize = 2_500;

struct Topic {
    subjects: &'static [&'static str],
    verbs: &'static [&'static str],
    objects: &'static [&'static str],
    places: &'static [&'static str],
    adjectives: &'static [&'static str],
}

const TOPICS: &[Topic] = &[
    Topic {
        subjects: &["the river", "the ferryman", "the current", "the delta", "the boatwright"],
        verbs: &["carried", "shaped", "flooded", "crossed", "measured"],
        objects: &["the silt", "the reeds", "the barges", "the sandbars", "the banks"],
        places: &["below the weir", "near the estuary", "along the towpath", "past the lock"],
        adjectives: &["muddy", "swift", "broad", "winding", "shallow"],
    },
    Topic {
        subjects: &["the merchant", "the caravan", "the guild", "the broker", "the harbor master"],
        verbs: &["traded", "weighed", "taxed", "shipped", "counted"],
        objects: &["bolts of linen", "copper ingots", "bales of wool", "crates of salt", "ledgers"],
        places: &["at the market", "in the warehouse", "beside the quay", "on the trade road"],
        adjectives: &["busy", "costly", "distant", "crowded", "steady"],
    },
    Topic {
        subjects: &["the storm", "the wind", "the fog", "the frost", "the monsoon"],
        verbs: &["swept", "chilled", "soaked", "covered", "battered"],
        objects: &["the valley", "the ridge", "the orchards", "the fields", "the rooftops"],
        places: &["before dawn", "through the night", "during the thaw", "over the plains"],
        adjectives: &["bitter", "humid", "gusty", "grey", "sudden"],
    },
    Topic {
        subjects: &["the astronomer", "the comet", "the observatory", "the telescope", "the eclipse"],
        verbs: &["tracked", "charted", "revealed", "dimmed", "aligned"],
        objects: &["the planets", "the constellations", "a faint nebula", "the moons", "the meridian"],
        places: &["above the horizon", "across the sky", "near the zenith", "beyond the clouds"],
        adjectives: &["bright", "remote", "silent", "ancient", "pale"],
    },
    Topic {
        subjects: &["the farmer", "the shepherd", "the harvest", "the plough", "the miller"],
        verbs: &["planted", "gathered", "threshed", "watered", "stored"],
        objects: &["the barley", "the rye", "the hay", "the turnips", "the seed grain"],
        places: &["in the furrows", "by the granary", "on the terraces", "behind the barn"],
        adjectives: &["golden", "heavy", "early", "modest", "sturdy"],
    },
    Topic {
        subjects: &["the choir", "the fiddler", "the composer", "the drummer", "the orchestra"],
        verbs: &["rehearsed", "performed", "tuned", "composed", "recorded"],
        objects: &["a slow hymn", "the overture", "a folk ballad", "the chorus", "a lively jig"],
        places: &["in the chapel", "at the festival", "under the bandstand", "in the concert hall"],
        adjectives: &["mellow", "loud", "graceful", "rousing", "quiet"],
    },
    Topic {
        subjects: &["the mason", "the architect", "the carpenter", "the cathedral", "the bridge"],
        verbs: &["raised", "designed", "braced", "restored", "framed"],
        objects: &["the arches", "the buttresses", "the timber beams", "the spire", "the vaults"],
        places: &["on the hilltop", "over the gorge", "in the old quarter", "by the square"],
        adjectives: &["tall", "ornate", "solid", "vaulted", "weathered"],
    },
    Topic {
        subjects: &["the forester", "the woodland", "the owl", "the deer", "the pine stand"],
        verbs: &["sheltered", "thinned", "watched", "roamed", "surveyed"],
        objects: &["the saplings", "the undergrowth", "the clearings", "the moss", "the trails"],
        places: &["in the glade", "along the ridge", "near the brook", "deep in the thicket"],
        adjectives: &["dense", "shady", "quiet", "tangled", "evergreen"],
    },
];

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn sentence(t: &Topic, rng: &mut ChaCha8Rng) -> String {
    let pick = |xs: &'static [&'static str], rng: &mut ChaCha8Rng| *xs.choose(rng).expect("non-empty");
    match rng.random_range(0..4) {
        0 => format!(
            "{} {} {} {}.",
            capitalize(pick(t.subjects, rng)),
            pick(t.verbs, rng),
            pick(t.objects, rng),
            pick(t.places, rng)
        ),
        1 => format!(
            "{}, {} {} the {} land.",
            capitalize(pick(t.places, rng)),
            pick(t.subjects, rng),
            pick(t.verbs, rng),
            pick(t.adjectives, rng)
        ),
        2 => format!(
            "Everyone agreed that {} was {} that season, and {} {} {}.",
            pick(t.objects, rng),
            pick(t.adjectives, rng),
            pick(t.subjects, rng),
            pick(t.verbs, rng),
            pick(t.objects, rng)
        ),
        _ => format!(
            "Some said {} {} {} long ago.",
            pick(t.subjects, rng),
            pick(t.verbs, rng),
            pick(t.objects, rng)
        ),
    }
}

/// Generates at least `tokens` tokens of paragraphs, each on one topic.
pub fn generate_filler(tokens: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut paragraphs = Vec::new();
    let mut total = 0;
    while total < tokens {
        let topic = &TOPICS[rng.random_range(0..TOPICS.len())];
        let n = rng.random_range(8..15);
        let para: Vec<String> = (0..n).map(|_| sentence(topic, &mut rng)).collect();
        let para = para.join(" ");
        total += count_tokens(&para);
        paragraphs.push(para);
    }
    paragraphs.join("\n\n")
}

/// The 60k-token built-in filler.
pub fn synthetic_filler() -> &'static str {
    static TEXT: OnceLock<String> = OnceLock::new();
    TEXT.get_or_init(|| generate_filler(SYNTHETIC_TOKENS, FILLER_SEED))
}

/// Pizza lore that shares the question's vocabulary without stating any
/// secret ingredient.
const DISTRACTOR: &[&str] = &[
    "Building the perfect pizza starts with a dough that rests for a full day.",
    "Each pizza maker swears that the first step to a perfect pizza is a hot stone oven.",
    "The perfect pizza needs a thin crust, a bright tomato sauce and a quick bake.",
    "What is needed to build a perfect pizza, according to the old bakers, is patience with the dough.",
    "Every pizza school teaches that the letter of the recipe matters less than the heat of the oven.",
    "A perfect pizza is built from flour, water, yeast and salt, kneaded by hand.",
    "The first pizza ovens were fired with olive wood to build a steady, even heat.",
    "Some pizza makers stretch each crust by hand because a rolling pin crushes the air out of the dough.",
    "To build the perfect pizza, the sauce is spread thin so the crust stays crisp.",
    "Each perfect pizza is turned in the oven so every side of the crust browns evenly.",
    "The best pizza dough is needed to rise twice before it is shaped.",
    "A pizza judge once said the first bite of a perfect pizza tells you everything about the oven.",
];

/// The synthetic filler with a block of pizza lore every
/// [`DISTRACTOR_SPACING`] tokens. Under a summary-only retriever the lore
/// outranks a chunk holding a few needle sentences among unrelated filler.
pub fn adversarial_filler() -> &'static str {
    static TEXT: OnceLock<String> = OnceLock::new();
    TEXT.get_or_init(|| {
        let base = synthetic_filler();
        let mut out = Vec::new();
        let mut since = 0;
        let mut block = 0;
        for para in base.split("\n\n") {
            out.push(para.to_string());
            since += count_tokens(para);
            if since >= DISTRACTOR_SPACING {
                let lore: Vec<&str> = (0..DISTRACTOR.len())
                    .map(|i| DISTRACTOR[(i + block * 5) % DISTRACTOR.len()])
                    .collect();
                out.push(lore.join(" "));
                since = 0;
                block += 1;
            }
        }
        out.join("\n\n")
    })
}
