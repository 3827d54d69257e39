//! BABILong-style cases: short fact chains about people, rooms and objects
//! scattered through filler, answered by a small world simulator.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::niah::{check_needles, haystack_window, insert_needles, needle_offsets, Haystack};
use super::{BenchError, NiahCase};
use crate::chunker::count_tokens;

pub const PERSONS: [&str; 4] = ["Mary", "John", "Daniel", "Sandra"];
pub const LOCATIONS: [&str; 6] = ["bathroom", "bedroom", "kitchen", "hallway", "garden", "office"];
pub const OBJECTS: [&str; 3] = ["apple", "milk", "football"];

const MOVE: [&str; 5] = ["moved to", "went to", "journeyed to", "travelled to", "went back to"];
const GRAB: [&str; 4] = ["picked up", "grabbed", "got", "took"];
const DROP: [&str; 4] = ["put down", "discarded", "dropped", "left"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BabiTask {
    /// Where is a person (one supporting fact).
    Qa1,
    /// Where is an object (two supporting facts).
    Qa2,
    /// Where was an object before a room (three supporting facts).
    Qa3,
    /// Spatial relation between two rooms.
    Qa4,
    /// Who gave an object to whom.
    Qa5,
}

impl BabiTask {
    pub fn as_str(self) -> &'static str {
        match self {
            BabiTask::Qa1 => "qa1",
            BabiTask::Qa2 => "qa2",
            BabiTask::Qa3 => "qa3",
            BabiTask::Qa4 => "qa4",
            BabiTask::Qa5 => "qa5",
        }
    }

    /// Facts generated when no count is given.
    pub fn default_facts(self) -> usize {
        match self {
            BabiTask::Qa1 => 6,
            BabiTask::Qa2 => 8,
            BabiTask::Qa3 => 14,
            BabiTask::Qa4 => 4,
            BabiTask::Qa5 => 6,
        }
    }
}

impl fmt::Display for BabiTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BabiTask {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "qa1" => BabiTask::Qa1,
            "qa2" => BabiTask::Qa2,
            "qa3" => BabiTask::Qa3,
            "qa4" => BabiTask::Qa4,
            "qa5" => BabiTask::Qa5,
            other => return Err(BenchError::Suite(format!("unknown task `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fact {
    Move { person: usize, room: usize, verb: usize },
    Grab { person: usize, object: usize, verb: usize },
    /// `there` appends the word "there", as in "discarded the milk there".
    Drop { person: usize, object: usize, verb: usize, there: bool },
    Give { giver: usize, object: usize, receiver: usize },
    /// "The {a} is {direction} of the {b}."
    Relation { a: usize, direction: &'static str, b: usize },
}

impl Fact {
    pub fn render(&self) -> String {
        match *self {
            Fact::Move { person, room, verb } => {
                format!("{} {} the {}.", PERSONS[person], MOVE[verb], LOCATIONS[room])
            }
            Fact::Grab { person, object, verb } => {
                format!("{} {} the {}.", PERSONS[person], GRAB[verb], OBJECTS[object])
            }
            Fact::Drop {
                person,
                object,
                verb,
                there,
            } => format!(
                "{} {} the {}{}.",
                PERSONS[person],
                DROP[verb],
                OBJECTS[object],
                if there { " there" } else { "" }
            ),
            Fact::Give {
                giver,
                object,
                receiver,
            } => format!(
                "{} gave the {} to {}.",
                PERSONS[giver], OBJECTS[object], PERSONS[receiver]
            ),
            Fact::Relation { a, direction, b } => {
                format!("The {} is {} of the {}.", LOCATIONS[a], direction, LOCATIONS[b])
            }
        }
    }
}

/// State after replaying a fact list.
#[derive(Debug, Clone, Default)]
pub struct World {
    pub person_room: [Option<usize>; PERSONS.len()],
    pub holder: [Option<usize>; OBJECTS.len()],
    /// Rooms each object has been in, in order, without repeats in a row.
    pub object_rooms: [Vec<usize>; OBJECTS.len()],
}

impl World {
    fn place(&mut self, object: usize, room: Option<usize>) {
        if let Some(r) = room {
            if self.object_rooms[object].last() != Some(&r) {
                self.object_rooms[object].push(r);
            }
        }
    }

    pub fn apply(&mut self, fact: &Fact) {
        match *fact {
            Fact::Move { person, room, .. } => {
                self.person_room[person] = Some(room);
                for o in 0..OBJECTS.len() {
                    if self.holder[o] == Some(person) {
                        self.place(o, Some(room));
                    }
                }
            }
            Fact::Grab { person, object, .. } => {
                self.holder[object] = Some(person);
                self.place(object, self.person_room[person]);
            }
            Fact::Drop { object, .. } => self.holder[object] = None,
            Fact::Give {
                object, receiver, ..
            } => {
                self.holder[object] = Some(receiver);
                self.place(object, self.person_room[receiver]);
            }
            Fact::Relation { .. } => {}
        }
    }

    pub fn replay(facts: &[Fact]) -> Self {
        let mut w = World::default();
        for f in facts {
            w.apply(f);
        }
        w
    }

    pub fn object_room(&self, object: usize) -> Option<usize> {
        self.object_rooms[object].last().copied()
    }

    /// The room an object was in before its last visit to `room`.
    pub fn room_before(&self, object: usize, room: usize) -> Option<usize> {
        let hist = &self.object_rooms[object];
        let at = hist.iter().rposition(|&r| r == room)?;
        at.checked_sub(1).map(|i| hist[i])
    }
}

/// Facts, question and answer before they are scattered into filler.
#[derive(Debug, Clone, PartialEq)]
pub struct FactChain {
    pub facts: Vec<String>,
    pub question: String,
    pub answer: String,
}

fn random_actions(rng: &mut ChaCha8Rng, n: usize, with_objects: bool) -> Vec<Fact> {
    let mut world = World::default();
    let mut facts = Vec::with_capacity(n);
    while facts.len() < n {
        let person = rng.random_range(0..PERSONS.len());
        let held: Vec<usize> = (0..OBJECTS.len())
            .filter(|&o| world.holder[o] == Some(person))
            .collect();
        let free: Vec<usize> = (0..OBJECTS.len()).filter(|&o| world.holder[o].is_none()).collect();
        let roll = rng.random_range(0..10);
        let fact = if with_objects && roll < 2 && !free.is_empty() {
            Fact::Grab {
                person,
                object: *free.choose(rng).unwrap(),
                verb: rng.random_range(0..GRAB.len()),
            }
        } else if with_objects && roll < 3 && !held.is_empty() {
            Fact::Drop {
                person,
                object: *held.choose(rng).unwrap(),
                verb: rng.random_range(0..DROP.len()),
                there: false,
            }
        } else {
            Fact::Move {
                person,
                room: rng.random_range(0..LOCATIONS.len()),
                verb: rng.random_range(0..MOVE.len()),
            }
        };
        world.apply(&fact);
        facts.push(fact);
    }
    facts
}

fn render_all(facts: &[Fact]) -> Vec<String> {
    facts.iter().map(Fact::render).collect()
}

const MAX_ATTEMPTS: usize = 10_000;

/// Draws fact lists until one supports a question of the task's kind.
pub fn generate_chain(task: BabiTask, n_facts: usize, seed: u64) -> Result<FactChain, BenchError> {
    let n = n_facts.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let chain = match task {
            BabiTask::Qa1 => {
                let facts = random_actions(&mut rng, n, false);
                let w = World::replay(&facts);
                let Fact::Move { person, .. } = facts[rng.random_range(0..facts.len())] else {
                    continue;
                };
                Some(FactChain {
                    facts: render_all(&facts),
                    question: format!("Where is {}?", PERSONS[person]),
                    answer: LOCATIONS[w.person_room[person].unwrap()].to_string(),
                })
            }
            BabiTask::Qa2 => {
                let facts = random_actions(&mut rng, n, true);
                let w = World::replay(&facts);
                (0..OBJECTS.len())
                    .find_map(|o| w.object_room(o).map(|r| (o, r)))
                    .map(|(o, r)| FactChain {
                        facts: render_all(&facts),
                        question: format!("Where is the {}?", OBJECTS[o]),
                        answer: LOCATIONS[r].to_string(),
                    })
            }
            BabiTask::Qa3 => {
                let facts = random_actions(&mut rng, n, true);
                let w = World::replay(&facts);
                (0..OBJECTS.len())
                    .find(|&o| w.object_rooms[o].len() >= 2)
                    .and_then(|o| {
                        let last = w.object_room(o)?;
                        let before = w.room_before(o, last)?;
                        Some(FactChain {
                            facts: render_all(&facts),
                            question: format!(
                                "Where was the {} before the {}?",
                                OBJECTS[o], LOCATIONS[last]
                            ),
                            answer: LOCATIONS[before].to_string(),
                        })
                    })
            }
            BabiTask::Qa4 => {
                // Rooms on a west-east line; each adjacent pair stated once.
                let rooms = index::sample(&mut rng, LOCATIONS.len(), (n + 1).min(LOCATIONS.len())).into_vec();
                let facts: Vec<Fact> = rooms
                    .windows(2)
                    .map(|w| {
                        if rng.random_bool(0.5) {
                            Fact::Relation { a: w[0], direction: "west", b: w[1] }
                        } else {
                            Fact::Relation { a: w[1], direction: "east", b: w[0] }
                        }
                    })
                    .collect();
                let i = rng.random_range(0..facts.len());
                let (a, b) = (rooms[i], rooms[i + 1]);
                Some(FactChain {
                    facts: render_all(&facts),
                    question: format!("What is west of the {}?", LOCATIONS[b]),
                    answer: LOCATIONS[a].to_string(),
                })
            }
            BabiTask::Qa5 => {
                let facts: Vec<Fact> = (0..n)
                    .map(|_| {
                        let giver = rng.random_range(0..PERSONS.len());
                        let receiver = (giver + rng.random_range(1..PERSONS.len())) % PERSONS.len();
                        Fact::Give {
                            giver,
                            object: rng.random_range(0..OBJECTS.len()),
                            receiver,
                        }
                    })
                    .collect();
                let Fact::Give {
                    giver,
                    object,
                    receiver,
                } = facts[facts.len() - 1]
                else {
                    unreachable!()
                };
                // The question must single out one giver.
                let unique = facts.iter().all(|f| match *f {
                    Fact::Give {
                        giver: g,
                        object: o,
                        receiver: r,
                    } => !(o == object && r == receiver) || g == giver,
                    _ => true,
                });
                unique.then(|| FactChain {
                    facts: render_all(&facts),
                    question: format!("Who gave the {} to {}?", OBJECTS[object], PERSONS[receiver]),
                    answer: PERSONS[giver].to_string(),
                })
            }
        };
        if let Some(c) = chain {
            return Ok(c);
        }
    }
    Err(BenchError::Suite(format!(
        "could not generate a {task} chain with {n} facts"
    )))
}

/// A fixed fourteen-fact qa3 chain whose answer is "kitchen".
pub fn sample_qa3_facts() -> Vec<Fact> {
    use Fact::*;
    let (mary, john, daniel, sandra) = (0, 1, 2, 3);
    let (bathroom, bedroom, kitchen, hallway, garden, office) = (0, 1, 2, 3, 4, 5);
    let (apple, milk, football) = (0, 1, 2);
    vec![
        Grab { person: daniel, object: milk, verb: 1 },
        Grab { person: mary, object: apple, verb: 0 },
        Move { person: sandra, room: hallway, verb: 4 },
        Move { person: daniel, room: hallway, verb: 2 },
        Move { person: john, room: bedroom, verb: 0 },
        Move { person: john, room: bathroom, verb: 1 },
        Drop { person: daniel, object: milk, verb: 1, there: true },
        Move { person: mary, room: kitchen, verb: 0 },
        Move { person: mary, room: office, verb: 2 },
        Grab { person: daniel, object: milk, verb: 2 },
        Move { person: john, room: garden, verb: 0 },
        Move { person: sandra, room: kitchen, verb: 3 },
        Drop { person: mary, object: apple, verb: 0, there: false },
        Grab { person: john, object: football, verb: 3 },
    ]
}

pub const SAMPLE_QA3_QUESTION: &str = "Where was the apple before the office?";

pub fn sample_qa3_chain() -> FactChain {
    let facts = sample_qa3_facts();
    let w = World::replay(&facts);
    FactChain {
        facts: render_all(&facts),
        question: SAMPLE_QA3_QUESTION.to_string(),
        answer: LOCATIONS[w.room_before(0, 5).expect("apple visited the office")].to_string(),
    }
}

/// Scatters the chain's facts, in order, over seeded sentence boundaries
/// of a filler window.
pub fn scatter_chain(
    chain: &FactChain,
    filler: &str,
    target_tokens: usize,
    seed: u64,
) -> Result<NiahCase, BenchError> {
    check_needles(&chain.facts)?;
    let hay: Haystack = haystack_window(filler, target_tokens, seed)?;
    let slots = hay.sentences.len() + 1;
    let k = chain.facts.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut boundaries: Vec<usize> = if k <= slots {
        index::sample(&mut rng, slots, k).into_vec()
    } else {
        (0..k).map(|_| rng.random_range(0..slots)).collect()
    };
    boundaries.sort_unstable();
    let lens: Vec<usize> = chain.facts.iter().map(|f| count_tokens(f)).collect();
    let offsets = needle_offsets(&hay, &lens, &boundaries);
    let depth = offsets.iter().sum::<usize>() as f64 / k as f64 / hay.tokens() as f64 * 100.0;
    Ok(NiahCase {
        id: String::new(),
        text: insert_needles(&hay, &chain.facts, &boundaries),
        haystack_tokens: hay.tokens(),
        target_tokens,
        needles: chain.facts.clone(),
        depth_percent: depth.min(100.0),
        insertion_offsets: offsets,
        question: chain.question.clone(),
        expected_keywords: vec![chain.answer.clone()],
    })
}

/// A generated case for `task` with the task's default fact count.
pub fn generate_babilong_like(
    task: BabiTask,
    filler: &str,
    target_tokens: usize,
    seed: u64,
) -> Result<NiahCase, BenchError> {
    generate_babilong_with(task, task.default_facts(), filler, target_tokens, seed)
}

pub fn generate_babilong_with(
    task: BabiTask,
    n_facts: usize,
    filler: &str,
    target_tokens: usize,
    seed: u64,
) -> Result<NiahCase, BenchError> {
    let chain = generate_chain(task, n_facts, seed)?;
    let mut case = scatter_chain(&chain, filler, target_tokens, seed)?;
    case.id = format!("babilong-{task}-t{target_tokens}-s{seed}");
    Ok(case)
}
