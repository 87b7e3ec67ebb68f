use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::generate::detokenize;
use super::{Instruction, LangError, Language, Lexicon, Provenance, Role};
use crate::seed::derive_seed;

/// Noise model of the translator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtConfig {
    /// Probability of dropping each function word.
    pub p_drop: f64,
    /// Probability of swapping a content word for another concept of the
    /// same kind (a mistranslation).
    pub p_sub: f64,
    /// Probability that a clause is reordered idiomatically instead of
    /// calqued word by word.
    pub order_fidelity: f64,
    pub seed: u64,
}

impl Default for MtConfig {
    fn default() -> Self {
        Self {
            p_drop: 0.15,
            p_sub: 0.10,
            order_fidelity: 0.5,
            seed: 0,
        }
    }
}

impl MtConfig {
    pub fn noise_free(seed: u64) -> Self {
        Self {
            p_drop: 0.0,
            p_sub: 0.0,
            order_fidelity: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), LangError> {
        for (name, p) in [
            ("p_drop", self.p_drop),
            ("p_sub", self.p_sub),
            ("order_fidelity", self.order_fidelity),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(LangError::Config(format!(
                    "{name} = {p} is not a probability"
                )));
            }
        }
        Ok(())
    }

    /// Short stable hash identifying cached renditions.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("config serializes"));
        h.finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtOutput {
    pub instruction: Instruction,
    /// Tokens that had no lexicon entry for this direction.
    pub unknown: usize,
}

fn rank(lang: Language, role: Role) -> u8 {
    match (lang, role) {
        (_, Role::Connective) => 0,
        (Language::Target, Role::Direction) => 1,
        (Language::Target, Role::Category) => 2,
        (Language::Target, Role::Attribute) => 3,
        (Language::Target, Role::Relation) => 4,
        (Language::Target, Role::Verb) => 5,
        (Language::Source, Role::Verb) => 1,
        (Language::Source, Role::Direction) => 2,
        (Language::Source, Role::Relation) => 3,
        (Language::Source, Role::Article) => 4,
        (Language::Source, Role::Attribute) => 5,
        (Language::Source, Role::Category) => 6,
        (Language::Target, Role::Particle) => 6,
        (_, Role::Punct) => 7,
        (_, Role::Unknown)
        | (Language::Target, Role::Article)
        | (Language::Source, Role::Particle) => 0,
    }
}

struct Item {
    id: u32,
    role: Role,
    rank: u8,
}

/// Translates clause by clause into `to`.
pub fn mt_translate(
    lex: &Lexicon,
    inst: &Instruction,
    to: Language,
    cfg: &MtConfig,
) -> Result<MtOutput, LangError> {
    cfg.validate()?;
    if inst.language == to {
        return Err(LangError::Direction {
            from: inst.language,
            to,
        });
    }
    let mut stream = derive_seed(cfg.seed, "mt", inst.path_id);
    for &t in &inst.tokens {
        stream = derive_seed(stream, "tok", t as u64);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream);

    let from = inst.language;
    let mut out = Vec::with_capacity(inst.tokens.len());
    let mut unknown = 0;
    for clause in inst.tokens.split_inclusive(|&t| lex.is_punct(t)) {
        let idiomatic = rng.gen_bool(cfg.order_fidelity);
        let mut items: Vec<Item> = Vec::with_capacity(clause.len() + 1);
        let mut last_rank = 0;
        let mut has_category = false;
        for &tok in clause {
            let entry = lex.entry(tok).filter(|e| e.language == Some(from));
            let Some(e) = entry else {
                unknown += 1;
                items.push(Item {
                    id: lex.unk(),
                    role: Role::Unknown,
                    rank: last_rank,
                });
                continue;
            };
            let mapped = match e.role {
                r if r.is_content() => {
                    let n_concepts = lex.concepts(to, r);
                    let concept = if n_concepts > 1 && rng.gen_bool(cfg.p_sub) {
                        (e.concept + rng.gen_range(1..n_concepts)) % n_concepts
                    } else {
                        e.concept
                    };
                    let forms = lex.cluster(to, r, concept);
                    Some(forms[e.form % forms.len()])
                }
                Role::Connective | Role::Relation | Role::Punct => {
                    let forms = lex.cluster(to, e.role, e.concept);
                    Some(forms[e.form % forms.len()])
                }
                // articles and particles have no counterpart
                _ => None,
            };
            if let Some(id) = mapped {
                has_category |= e.role == Role::Category;
                last_rank = rank(to, e.role);
                items.push(Item {
                    id,
                    role: e.role,
                    rank: last_rank,
                });
            }
        }
        if idiomatic {
            if to == Language::Source && has_category {
                items.push(Item {
                    id: lex.cluster(to, Role::Article, 0)[0],
                    role: Role::Article,
                    rank: rank(to, Role::Article),
                });
            }
            items.sort_by_key(|it| it.rank);
        }
        for it in items {
            if it.role.is_function() && rng.gen_bool(cfg.p_drop) {
                continue;
            }
            out.push(it.id);
        }
    }
    let text = detokenize(lex, &out);
    Ok(MtOutput {
        instruction: Instruction {
            language: to,
            provenance: Provenance::MT,
            path_id: inst.path_id,
            tokens: out,
            text,
        },
        unknown,
    })
}
