//! Template prompts describing a transition between two static relations,
//! in the two-clause form and the merged "from ... to" form, plus a parser
//! that inverts both templates.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::{index, IndexedRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SpatialRelation;
use crate::trajectory::DsrType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStructure {
    Default,
    FromTo,
}

impl PromptStructure {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Default => "default",
            Self::FromTo => "from_to",
        }
    }
}

impl fmt::Display for PromptStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PromptStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Self::Default),
            "from_to" => Ok(Self::FromTo),
            _ => Err(Error::InvalidConfig(format!("unknown prompt structure {s:?}"))),
        }
    }
}

/// Vocabulary for the template slots. Verbs are looked up by animal and fall
/// back to `default_verbs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotLists {
    pub scenes: Vec<String>,
    pub animals: Vec<String>,
    pub objects: Vec<String>,
    #[serde(default)]
    pub verbs: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub default_verbs: Vec<String>,
}

const SCENES: &[&str] = &[
    "On a grassy field with wildflowers",
    "In a quiet forest clearing",
    "By a calm riverbank with reeds",
    "At the edge of a sunny meadow",
    "On a rocky hillside with moss",
    "At a seaside dock with gulls",
    "Near a market square with stalls",
    "On a plaza with stone benches",
    "Inside a hallway with framed photos",
    "By a village well with buckets",
    "On a breezy hilltop at dusk",
    "In a maple grove with red leaves",
    "By a pebble beach with driftwood",
    "At a fountain plaza with tiles",
    "Inside a sunroom with potted plants",
    "At a gazebo with benches",
    "On a slope with stepping stones",
    "By a trailhead signpost",
    "In a colonnade with pillars",
    "At a riverside promenade with lamps",
    "At a pergola featuring climbing vines",
    "Inside a gallery featuring white walls",
    "On a courtyard deck featuring lanterns",
    "Near a hedgerow featuring sparrows",
    "By a canal featuring brick edges",
    "In a snowy park with pine trees",
    "On a wooden porch at sunset",
    "In a library reading room",
    "Beside a frozen pond in winter",
    "On a sandy desert dune",
];

const OBJECTS: &[&str] = &[
    "stone", "lamp", "hydrant", "bucket", "chair", "bench", "crate", "log", "desk", "table",
];

const VERBS: &[(&str, &[&str])] = &[
    ("rabbit", &["jumps", "hops"]),
    ("squirrel", &["scampers", "darts"]),
    ("cat", &["paces", "sneaks", "prowls"]),
    ("dog", &["runs", "trots", "bounds"]),
    ("fox", &["sprints", "dashes", "trots"]),
    ("turtle", &["ambles", "shuffles"]),
    ("bird", &["flutters", "pecks", "hops"]),
    ("duck", &["shuffles", "waddles"]),
    ("monkey", &["leaps", "climbs"]),
];

impl SlotLists {
    pub fn builtin() -> Self {
        let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        Self {
            scenes: own(SCENES),
            animals: VERBS.iter().map(|(a, _)| a.to_string()).collect(),
            objects: own(OBJECTS),
            verbs: VERBS.iter().map(|(a, v)| (a.to_string(), own(v))).collect(),
            default_verbs: own(&["moves"]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let noun = noun_re();
        let word = word_re();
        for (name, list) in [("scenes", &self.scenes), ("animals", &self.animals), ("objects", &self.objects)] {
            if list.is_empty() {
                return Err(Error::InvalidConfig(format!("slot list {name} is empty")));
            }
        }
        for s in &self.scenes {
            if s.trim().is_empty() || s.contains(',') || s.ends_with('.') || s.trim() != s {
                return Err(Error::InvalidConfig(format!(
                    "scene {s:?} must be non-empty, trimmed, without commas or a final period"
                )));
            }
        }
        for n in self.animals.iter().chain(&self.objects) {
            if !noun.is_match(n) {
                return Err(Error::InvalidConfig(format!("noun {n:?} must be lower-case words")));
            }
        }
        for a in &self.animals {
            let verbs = self.verbs_for(a);
            if verbs.is_empty() {
                return Err(Error::InvalidConfig(format!("no verbs for animal {a:?}")));
            }
            if let Some(v) = verbs.iter().find(|v| !word.is_match(v)) {
                return Err(Error::InvalidConfig(format!("verb {v:?} must be one lower-case word")));
            }
        }
        Ok(())
    }

    pub fn verbs_for(&self, animal: &str) -> &[String] {
        self.verbs
            .get(animal)
            .filter(|v| !v.is_empty())
            .unwrap_or(&self.default_verbs)
    }
}

fn noun_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[a-z]+( [a-z]+)*$").expect("static pattern"))
}

fn word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[a-z]+$").expect("static pattern"))
}

fn default_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^(?P<scene>[^,]+), a (?P<animal>.+?) is on the (?P<init>left|right|top) of a (?P<object>.+?), then the (?P<animal2>.+?) (?P<verb>[a-z]+) to the (?P<fin>left|right|top) of the (?P<object2>.+?)\.$",
        )
        .expect("static pattern")
    })
}

fn from_to_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^(?P<scene>[^,]+), a (?P<animal>.+?) (?P<verb>[a-z]+) from the (?P<init>left|right|top) of a (?P<object>.+?) to the (?P<fin>left|right|top) of the (?P<object2>.+?)\.$",
        )
        .expect("static pattern")
    })
}

/// One choice per slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSelection {
    pub scene: String,
    pub animal: String,
    pub object: String,
    pub verb: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptRecord {
    pub prompt_id: String,
    pub text: String,
    pub dsr_type: DsrType,
    #[serde(default)]
    pub dsr_type_name: Option<String>,
    pub animal_noun: String,
    pub object_noun: String,
    pub structure: PromptStructure,
}

fn sentence_case(s: &str) -> String {
    let mut cs = s.chars();
    match cs.next() {
        Some(c) => c.to_uppercase().chain(cs).collect(),
        None => String::new(),
    }
}

pub fn render_prompt(
    prompt_id: &str,
    sel: &SlotSelection,
    dsr_type: DsrType,
    structure: PromptStructure,
) -> Result<PromptRecord> {
    for (name, v) in [("scene", &sel.scene), ("animal", &sel.animal), ("object", &sel.object), ("verb", &sel.verb)] {
        if v.trim().is_empty() {
            return Err(Error::InvalidConfig(format!("missing slot {name}")));
        }
    }
    let init = dsr_type.initial_relation().keyword();
    let fin = dsr_type.final_relation().keyword();
    let (scene, a, o, v) = (sentence_case(&sel.scene), &sel.animal, &sel.object, &sel.verb);
    let text = match structure {
        PromptStructure::Default => {
            format!("{scene}, a {a} is on the {init} of a {o}, then the {a} {v} to the {fin} of the {o}.")
        }
        PromptStructure::FromTo => {
            format!("{scene}, a {a} {v} from the {init} of a {o} to the {fin} of the {o}.")
        }
    };
    Ok(PromptRecord {
        prompt_id: prompt_id.to_string(),
        text,
        dsr_type,
        dsr_type_name: Some(dsr_type.name().to_string()),
        animal_noun: a.clone(),
        object_noun: o.clone(),
        structure,
    })
}

/// Fields recovered from a prompt text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedPrompt {
    pub scene: String,
    pub animal_noun: String,
    pub object_noun: String,
    pub verb: String,
    pub dsr_type: DsrType,
    pub structure: PromptStructure,
}

pub fn parse_prompt(text: &str) -> Result<ParsedPrompt> {
    let text = text.trim();
    let (caps, structure) = if let Some(c) = default_re().captures(text) {
        (c, PromptStructure::Default)
    } else if let Some(c) = from_to_re().captures(text) {
        (c, PromptStructure::FromTo)
    } else {
        return Err(Error::PromptParse(format!(
            "no initial and final relation phrases found in {text:?}"
        )));
    };
    let animal = &caps["animal"];
    let object = &caps["object"];
    if caps.name("animal2").is_some_and(|m| m.as_str() != animal) {
        return Err(Error::PromptParse(format!(
            "animal {animal:?} and {:?} disagree",
            &caps["animal2"]
        )));
    }
    if &caps["object2"] != object {
        return Err(Error::PromptParse(format!(
            "object {object:?} and {:?} disagree",
            &caps["object2"]
        )));
    }
    let rel = |k: &str| SpatialRelation::from_keyword(&caps[k]).expect("pattern restricts keywords");
    let dsr_type = DsrType::from_relations(rel("init"), rel("fin")).ok_or_else(|| {
        Error::PromptParse(format!("{} to {} is not a transition", &caps["init"], &caps["fin"]))
    })?;
    Ok(ParsedPrompt {
        scene: caps["scene"].to_string(),
        animal_noun: animal.to_string(),
        object_noun: object.to_string(),
        verb: caps["verb"].to_string(),
        dsr_type,
        structure,
    })
}

/// Generates `n` prompts cycling through `dsr_types`.
///
/// Within a type no (scene, animal, object) triple repeats, so `n` may not
/// exceed that cross-product per type.
pub fn generate_corpus(
    slots: &SlotLists,
    dsr_types: &[DsrType],
    n: usize,
    seed: u64,
    structure: PromptStructure,
) -> Result<Vec<PromptRecord>> {
    slots.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("corpus size must be >= 1".into()));
    }
    if dsr_types.is_empty() {
        return Err(Error::InvalidConfig("no dsr types requested".into()));
    }
    let (ns, na, no) = (slots.scenes.len(), slots.animals.len(), slots.objects.len());
    let combos = ns * na * no;
    let mut needed: Vec<(DsrType, usize)> = Vec::new();
    for i in 0..n {
        let t = dsr_types[i % dsr_types.len()];
        match needed.iter_mut().find(|(u, _)| *u == t) {
            Some(e) => e.1 += 1,
            None => needed.push((t, 1)),
        }
    }
    if let Some((t, k)) = needed.iter().find(|(_, k)| *k > combos) {
        return Err(Error::InvalidConfig(format!(
            "{k} prompts of type {t} requested but only {combos} distinct slot combinations exist"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queues: Vec<(DsrType, std::vec::IntoIter<usize>)> = needed
        .iter()
        .map(|&(t, k)| (t, index::sample(&mut rng, combos, k).into_vec().into_iter()))
        .collect();
    let width = (n - 1).to_string().len().max(4);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = dsr_types[i % dsr_types.len()];
        let combo = queues
            .iter_mut()
            .find(|(u, _)| *u == t)
            .and_then(|(_, q)| q.next())
            .expect("queue sized by count");
        let (s, rest) = (combo / (na * no), combo % (na * no));
        let (a, o) = (rest / no, rest % no);
        let animal = &slots.animals[a];
        let verb = slots
            .verbs_for(animal)
            .choose(&mut rng)
            .expect("validated non-empty");
        let sel = SlotSelection {
            scene: slots.scenes[s].clone(),
            animal: animal.clone(),
            object: slots.objects[o].clone(),
            verb: verb.clone(),
        };
        out.push(render_prompt(&format!("p{i:0width$}"), &sel, t, structure)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sel(scene: &str, animal: &str, object: &str, verb: &str) -> SlotSelection {
        SlotSelection {
            scene: scene.into(),
            animal: animal.into(),
            object: object.into(),
            verb: verb.into(),
        }
    }

    #[test]
    fn corpus_line_reproduced() {
        let r = render_prompt(
            "p0",
            &sel("On a grassy field with wildflowers", "rabbit", "stone", "jumps"),
            DsrType::D,
            PromptStructure::Default,
        )
        .unwrap();
        assert_eq!(
            r.text,
            "On a grassy field with wildflowers, a rabbit is on the left of a stone, then the rabbit jumps to the right of the stone."
        );
    }

    #[test]
    fn from_to_form() {
        let r = render_prompt(
            "p0",
            &sel("On a rocky hillside with moss", "fox", "chair", "sprints"),
            DsrType::D,
            PromptStructure::FromTo,
        )
        .unwrap();
        assert!(r.text.ends_with("a fox sprints from the left of a chair to the right of the chair."));
    }

    #[test]
    fn type_a_phrases() {
        let r = render_prompt("p", &sel("in a yard", "cat", "box", "hops"), DsrType::A, PromptStructure::Default).unwrap();
        assert!(r.text.contains("on the left of") && r.text.contains("to the top of"));
        assert!(r.text.starts_with("In a yard"));
    }

    #[test]
    fn parse_examples() {
        assert!(parse_prompt("a cat sits").is_err());
        let p = parse_prompt(
            "At a seaside dock with gulls, a turtle is on the left of a bench, then the turtle ambles to the top of the bench.",
        )
        .unwrap();
        assert_eq!(p.dsr_type.final_relation(), SpatialRelation::Top);
        assert_eq!(p.dsr_type, DsrType::A);
        assert_eq!((p.animal_noun.as_str(), p.object_noun.as_str()), ("turtle", "bench"));
        let mixed = "In a yard, a cat is on the left of a box, then the dog runs to the right of the box.";
        assert!(parse_prompt(mixed).is_err());
        let same = "In a yard, a cat is on the left of a box, then the cat runs to the left of the box.";
        assert!(parse_prompt(same).is_err());
    }

    #[test]
    fn multiword_nouns_round_trip() {
        let r = render_prompt("p", &sel("in a yard", "red fox", "fire hydrant", "runs"), DsrType::E, PromptStructure::FromTo).unwrap();
        let p = parse_prompt(&r.text).unwrap();
        assert_eq!(p.animal_noun, "red fox");
        assert_eq!(p.object_noun, "fire hydrant");
        assert_eq!(p.dsr_type, DsrType::E);
    }

    #[test]
    fn corpus_cycles_types() {
        let c = generate_corpus(&SlotLists::builtin(), &DsrType::ALL, 6, 0, PromptStructure::Default).unwrap();
        let types: Vec<DsrType> = c.iter().map(|r| r.dsr_type).collect();
        assert_eq!(types, DsrType::ALL.to_vec());
        let again = generate_corpus(&SlotLists::builtin(), &DsrType::ALL, 6, 0, PromptStructure::Default).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn capacity_enforced() {
        let slots = SlotLists {
            scenes: vec!["in a yard".into()],
            animals: vec!["cat".into()],
            objects: vec!["box".into(), "log".into()],
            verbs: BTreeMap::new(),
            default_verbs: vec!["runs".into()],
        };
        assert!(generate_corpus(&slots, &[DsrType::A], 2, 0, PromptStructure::Default).is_ok());
        assert!(generate_corpus(&slots, &[DsrType::A], 3, 0, PromptStructure::Default).is_err());
        assert!(generate_corpus(&slots, &[DsrType::A, DsrType::B], 4, 0, PromptStructure::Default).is_ok());
    }

    #[test]
    fn builtin_slots_are_valid() {
        SlotLists::builtin().validate().unwrap();
        let mut bad = SlotLists::builtin();
        bad.scenes.push("in a yard, at noon".into());
        assert!(bad.validate().is_err());
    }
}
