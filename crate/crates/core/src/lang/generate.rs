use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{Instruction, Language, Lexicon, Provenance, Role};
use crate::world::{PathSpec, World};

pub const MAX_TOKENS: usize = 80;

// Annotator habits. Target writers chain clauses slightly more often but
// never use articles, so source instructions still come out longer.
const SRC_CONNECTIVE: f64 = 0.45;
const TGT_CONNECTIVE: f64 = 0.55;
const TGT_PARTICLE: f64 = 0.2;
const MENTION_LANDMARK: f64 = 0.85;

/// Relative direction concept for turning from `heading` to `motion`.
pub fn direction_concept(heading: usize, motion: usize, k: usize) -> usize {
    let rel = (motion + k - heading) % k;
    ((rel * 8) as f64 / k as f64).round() as usize % 8
}

struct ClausePlan {
    stop: bool,
    direction: usize,
    landmark: Option<(usize, usize)>,
    connective: bool,
    particle: bool,
    // synonym picks, drawn once so rendering can be repeated
    verb_form: usize,
    dir_form: usize,
    cat_form: usize,
    attr_form: usize,
    conn_form: usize,
    rel_form: usize,
}

/// Synonym choice: source writers favour the first form of a cluster,
/// target writers the last, so the two corpora (and translations that keep
/// form positions) have different unigram statistics.
fn pick_form<R: Rng + ?Sized>(rng: &mut R, size: usize, lang: Language) -> usize {
    if size == 1 {
        return 0;
    }
    let weights: Vec<f64> = (0..size)
        .map(|j| 1.0 / ((j + 1) * (j + 1)) as f64)
        .collect();
    let j = WeightedIndex::new(&weights)
        .expect("positive weights")
        .sample(rng);
    match lang {
        Language::Source => j,
        Language::Target => size - 1 - j,
    }
}

/// Human-style instruction for a reference path: one clause per hop plus a
/// stop clause, in the requested language.
pub fn generate_instruction<R: Rng + ?Sized>(
    lex: &Lexicon,
    world: &World,
    spec: &PathSpec,
    language: Language,
    rng: &mut R,
    path_id: u64,
) -> Instruction {
    let k = world.k();
    let mut plans = Vec::with_capacity(spec.path.len());
    let mut heading = spec.heading;
    let p_conn = match language {
        Language::Source => SRC_CONNECTIVE,
        Language::Target => TGT_CONNECTIVE,
    };
    for (i, hop) in spec.path.windows(2).enumerate() {
        let motion = world.direction_sector(hop[0], hop[1]);
        let direction = direction_concept(heading, motion, k);
        heading = motion;
        let landmark = world
            .landmark_in_sector(hop[0], motion)
            .filter(|_| rng.gen_bool(MENTION_LANDMARK));
        let connective = i > 0 && rng.gen_bool(p_conn);
        plans.push(plan(
            lex, language, rng, false, direction, landmark, connective,
        ));
    }
    let goal_marks: Vec<(usize, usize)> = (0..k)
        .filter_map(|s| world.landmark_in_sector(spec.goal, s))
        .collect();
    let landmark = goal_marks
        .choose(rng)
        .copied()
        .filter(|_| rng.gen_bool(MENTION_LANDMARK));
    plans.push(plan(lex, language, rng, true, 0, landmark, false));

    // Drop optional words from the last clauses until the cap is met.
    let mut plain_from = plans.len();
    let tokens = loop {
        let tokens: Vec<u32> = plans
            .iter()
            .enumerate()
            .flat_map(|(i, p)| render(lex, language, p, i >= plain_from))
            .collect();
        if tokens.len() <= MAX_TOKENS || plain_from == 0 {
            break tokens;
        }
        plain_from -= 1;
    };
    let text = detokenize(lex, &tokens);
    Instruction {
        language,
        provenance: Provenance::Human,
        path_id,
        tokens,
        text,
    }
}

fn plan<R: Rng + ?Sized>(
    lex: &Lexicon,
    lang: Language,
    rng: &mut R,
    stop: bool,
    direction: usize,
    landmark: Option<(usize, usize)>,
    connective: bool,
) -> ClausePlan {
    let size = |role, concept| lex.cluster(lang, role, concept).len();
    let (cat, attr) = landmark.unwrap_or((0, 0));
    let particle = lang == Language::Target && rng.gen_bool(TGT_PARTICLE);
    ClausePlan {
        stop,
        direction,
        landmark,
        connective,
        particle,
        verb_form: pick_form(rng, size(Role::Verb, stop as usize), lang),
        dir_form: pick_form(rng, size(Role::Direction, direction), lang),
        cat_form: pick_form(rng, size(Role::Category, cat), lang),
        attr_form: pick_form(rng, size(Role::Attribute, attr), lang),
        conn_form: rng.gen_range(0..size(Role::Connective, 0)),
        rel_form: rng.gen_range(0..size(Role::Relation, stop as usize)),
    }
}

fn render(lex: &Lexicon, lang: Language, p: &ClausePlan, plain: bool) -> Vec<u32> {
    let word = |role, concept, form: usize| lex.cluster(lang, role, concept)[form];
    let verb = word(Role::Verb, p.stop as usize, p.verb_form);
    let rel = word(Role::Relation, p.stop as usize, p.rel_form);
    let landmark = if plain { None } else { p.landmark };
    let mut out = Vec::with_capacity(9);
    match lang {
        Language::Source => {
            if p.connective && !plain {
                out.push(word(Role::Connective, 0, p.conn_form));
            }
            out.push(verb);
            if !p.stop {
                out.push(word(Role::Direction, p.direction, p.dir_form));
            }
            if let Some((cat, attr)) = landmark {
                out.push(rel);
                out.push(word(Role::Article, 0, 0));
                out.push(word(Role::Attribute, attr, p.attr_form));
                out.push(word(Role::Category, cat, p.cat_form));
            }
        }
        Language::Target => {
            if p.connective && !plain {
                out.push(word(Role::Connective, 0, p.conn_form));
            }
            if !p.stop {
                out.push(word(Role::Direction, p.direction, p.dir_form));
            }
            if let Some((cat, attr)) = landmark {
                out.push(word(Role::Category, cat, p.cat_form));
                out.push(word(Role::Attribute, attr, p.attr_form));
                out.push(rel);
            }
            out.push(verb);
            if p.particle && !plain {
                out.push(word(Role::Particle, 0, 0));
            }
        }
    }
    out.push(lex.punct(lang, p.stop));
    out
}

/// Words separated by single spaces; punctuation attaches to the previous
/// word.
pub fn detokenize(lex: &Lexicon, tokens: &[u32]) -> String {
    let mut text = String::new();
    for (i, &t) in tokens.iter().enumerate() {
        if i > 0 && !lex.is_punct(t) {
            text.push(' ');
        }
        text.push_str(lex.text(t));
    }
    text
}

/// Inverse of [`detokenize`]; words outside the lexicon map to `<unk>`.
pub fn tokenize(lex: &Lexicon, text: &str) -> Vec<u32> {
    let puncts: Vec<&str> = lex
        .entries()
        .iter()
        .filter(|e| e.role == Role::Punct)
        .map(|e| e.text.as_str())
        .collect();
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut rest = chunk;
        let mut trailing = Vec::new();
        'peel: loop {
            for p in &puncts {
                if let Some(head) = rest.strip_suffix(p) {
                    trailing.push(*p);
                    rest = head;
                    continue 'peel;
                }
            }
            break;
        }
        if !rest.is_empty() {
            out.push(lex.id(rest).unwrap_or(lex.unk()));
        }
        out.extend(
            trailing
                .iter()
                .rev()
                .map(|p| lex.id(p).expect("punct in lexicon")),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_world, WorldConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn direction_buckets_for_eight_sectors() {
        assert_eq!(direction_concept(0, 0, 8), 0);
        assert_eq!(direction_concept(0, 2, 8), 2);
        assert_eq!(direction_concept(3, 1, 8), 6);
        assert_eq!(direction_concept(7, 3, 8), 4);
        assert_eq!(direction_concept(0, 3, 16), 2);
    }

    #[test]
    fn one_hop_has_two_clauses() {
        let world = generate_world(7, &WorldConfig::default()).unwrap();
        let lex = Lexicon::new(10, 6).unwrap();
        let (a, b) = (0, world.neighbors(0)[0].0);
        let spec = PathSpec {
            path: vec![a, b],
            heading: 0,
            goal: b,
            length: world.distance(a, b),
        };
        for lang in [Language::Source, Language::Target] {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let inst = generate_instruction(&lex, &world, &spec, lang, &mut rng, 0);
            assert_eq!(inst.sub_instructions(&lex), 2, "{}", inst.text);
            assert_eq!(tokenize(&lex, &inst.text), inst.tokens);
        }
    }

    #[test]
    fn tokenize_handles_stacked_punctuation_and_unknowns() {
        let lex = Lexicon::new(10, 6).unwrap();
        let toks = tokenize(&lex, "go left,. zzz youz，");
        let texts: Vec<&str> = toks.iter().map(|&t| lex.text(t)).collect();
        assert_eq!(texts, ["go", "left", ",", ".", "<unk>", "youz", "，"]);
        assert_eq!(detokenize(&lex, &toks), "go left,. <unk> youz，");
    }
}
