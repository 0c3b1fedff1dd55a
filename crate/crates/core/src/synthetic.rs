//! Seeded template corpus with known gold quadruples.
//!
//! Every sentence carries at most one target group, so the gold annotations are
//! recoverable by the two-stage decoder.

use rand::prelude::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{project, Annotations, Dataset, Record};
use crate::error::Result;
use crate::model::{Polarity, Quadruple, Sentence, Span};
use crate::pipeline::TaskKind;

const ENTITIES: &[&str] = &[
    "sushi",
    "pizza",
    "wait staff",
    "chef",
    "fish tacos",
    "wine list",
    "bartender",
    "dessert",
];

const ASPECTS: &[&str] = &["service", "price", "decor", "portion size", "atmosphere", "quality"];

const OPINIONS: &[(&str, Polarity)] = &[
    ("great", Polarity::Positive),
    ("delicious", Polarity::Positive),
    ("top notch", Polarity::Positive),
    ("impeccable", Polarity::Positive),
    ("okay", Polarity::Neutral),
    ("average", Polarity::Neutral),
    ("slow", Polarity::Negative),
    ("cramped", Polarity::Negative),
    ("could have been better", Polarity::Negative),
];

const FILLERS: &[&str] = &[
    "we went there on a sunday .",
    "my friend booked a table for two .",
    "it is near the station .",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Word(&'static str),
    Entity,
    Aspect,
    Opinion,
    SecondOpinion,
}

use Slot::{Aspect as A, Entity as E, Opinion as O, SecondOpinion as O2, Word as W};

const TEMPLATES: &[&[Slot]] = &[
    &[W("the"), E, W("was"), O, W(".")],
    &[W("the"), A, W("was"), O, W(".")],
    &[W("the"), A, W("of"), W("the"), E, W("was"), O, W(".")],
    &[W("i"), W("thought"), W("the"), E, W("was"), W("really"), O, W(".")],
    &[W("honestly"), W(","), W("the"), A, W("here"), W("is"), O, W(".")],
    &[W("the"), E, W("was"), O, W("and"), O2, W(".")],
    &[W("their"), E, W("'s"), A, W("is"), O, W("!")],
    &[W("overall"), W("the"), A, W("felt"), O, W(".")],
    &[W("fillers")],
];

pub const TEMPLATE_COUNT: usize = TEMPLATES.len();

fn push_words(tokens: &mut Vec<String>, phrase: &str) -> Span {
    let start = tokens.len();
    tokens.extend(phrase.split(' ').map(str::to_owned));
    Span::new(start, tokens.len())
}

/// One sentence from a uniformly chosen template.
pub fn generate_record<R: Rng>(id: String, rng: &mut R) -> Record {
    let template = TEMPLATES.choose(rng).expect("templates");
    if template == &[W("fillers")] {
        let text = FILLERS.choose(rng).expect("fillers");
        return Record {
            sentence: Sentence::from_text(id, text).expect("non-empty"),
            gold: Annotations::Quads(vec![]),
        };
    }
    let entity = *ENTITIES.choose(rng).expect("entities");
    let aspect = *ASPECTS.choose(rng).expect("aspects");
    let (first, polarity) = *OPINIONS.choose(rng).expect("opinions");
    let second = OPINIONS
        .iter()
        .filter(|(o, p)| *p == polarity && *o != first)
        .map(|(o, _)| *o)
        .collect::<Vec<_>>();
    let second = *second.choose(rng).expect("two opinions per polarity");

    let mut tokens = Vec::new();
    let (mut e, mut a, mut opinions) = (None, None, Vec::new());
    for slot in template.iter() {
        match *slot {
            Slot::Word(w) => tokens.push(w.to_owned()),
            Slot::Entity => e = Some(push_words(&mut tokens, entity)),
            Slot::Aspect => a = Some(push_words(&mut tokens, aspect)),
            Slot::Opinion => opinions.push(push_words(&mut tokens, first)),
            Slot::SecondOpinion => opinions.push(push_words(&mut tokens, second)),
        }
    }
    let quads = opinions
        .into_iter()
        .map(|o| Quadruple::new(e, a, o, polarity))
        .collect();
    Record {
        sentence: Sentence::new(id, tokens).expect("non-empty"),
        gold: Annotations::Quads(quads),
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
}

/// Default split sizes.
pub const SPLIT_SIZES: (usize, usize, usize) = (200, 50, 50);

pub fn easqe_splits(seed: u64, sizes: (usize, usize, usize)) -> Splits {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |name: &str, n: usize| {
        let records = (0..n)
            .map(|i| generate_record(format!("{name}-{i}"), &mut rng))
            .collect();
        Dataset::new(name, TaskKind::Easqe, records).expect("unique ids")
    };
    Splits {
        train: make("train", sizes.0),
        dev: make("dev", sizes.1),
        test: make("test", sizes.2),
    }
}

/// Template splits projected to `task`.
pub fn splits(task: TaskKind, seed: u64, sizes: (usize, usize, usize)) -> Result<Splits> {
    let s = easqe_splits(seed, sizes);
    Ok(Splits {
        train: project(&s.train, task)?,
        dev: project(&s.dev, task)?,
        test: project(&s.test, task)?,
    })
}
