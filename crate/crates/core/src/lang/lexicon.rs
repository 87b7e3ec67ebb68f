use std::collections::HashMap;

use super::{LangError, Language};

/// Grammatical role of a surface form. Content roles carry a concept index
/// that the bilingual map preserves; function roles differ per language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Category,
    Attribute,
    Direction,
    /// concept 0 = move, 1 = stop
    Verb,
    Connective,
    /// concept 0 = relation used with a motion, 1 = location used with stop
    Relation,
    Article,
    Particle,
    /// concept 0 = clause separator, 1 = final stop
    Punct,
    Unknown,
}

impl Role {
    pub fn is_content(self) -> bool {
        matches!(
            self,
            Role::Category | Role::Attribute | Role::Direction | Role::Verb
        )
    }

    pub fn is_function(self) -> bool {
        matches!(
            self,
            Role::Connective | Role::Relation | Role::Article | Role::Particle
        )
    }
}

pub const DIRECTIONS: [&str; 8] = [
    "forward",
    "bear-left",
    "left",
    "sharp-left",
    "back",
    "sharp-right",
    "right",
    "bear-right",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub text: String,
    pub language: Option<Language>,
    pub role: Role,
    pub concept: usize,
    pub form: usize,
}

type Cluster = &'static [&'static str];

const SRC_CATEGORIES: [Cluster; 12] = [
    &["sofa", "couch"],
    &["table", "desk"],
    &["door", "doorway", "entrance"],
    &["lamp", "light"],
    &["plant", "fern"],
    &["stairs", "staircase", "steps"],
    &["bed"],
    &["window", "pane"],
    &["painting", "picture", "artwork"],
    &["sink", "basin"],
    &["chair", "seat"],
    &["rug", "carpet", "mat"],
];
const TGT_CATEGORIES: [Cluster; 12] = [
    &["shafa", "ruyi"],
    &["zhuo", "anmo"],
    &["menko", "kouda", "rumen"],
    &["dengu", "guanxi"],
    &["huzi", "caomu"],
    &["loti", "jieba", "taijo"],
    &["chuan"],
    &["chuko", "boli"],
    &["huar", "tupo", "yishu"],
    &["shuik", "pendi"],
    &["yizo", "zuowe"],
    &["ditan", "rongo", "dianzi"],
];
const SRC_ATTRIBUTES: [Cluster; 8] = [
    &["red", "crimson"],
    &["blue", "navy"],
    &["wooden", "timber"],
    &["large", "big", "huge"],
    &["small", "little"],
    &["white", "pale"],
    &["black", "dark"],
    &["green"],
];
const TGT_ATTRIBUTES: [Cluster; 8] = [
    &["hongse", "zhuhon"],
    &["lanse", "shenla"],
    &["muzhi", "mutou"],
    &["dade", "judao", "pangda"],
    &["xiaode", "weixi"],
    &["baise", "danbai"],
    &["heise", "anhei"],
    &["lvse"],
];
const SRC_DIRECTIONS: [Cluster; 8] = [
    &["forward", "straight", "ahead"],
    &["bear-left", "veer-left"],
    &["left"],
    &["sharp-left", "hard-left"],
    &["back", "around"],
    &["sharp-right", "hard-right"],
    &["right"],
    &["bear-right", "veer-right"],
];
const TGT_DIRECTIONS: [Cluster; 8] = [
    &["zhiqi", "wangqi", "xiangqi"],
    &["pianzuo", "shaozuo"],
    &["zuoz"],
    &["jizuo", "dazuo"],
    &["huitou", "diaot"],
    &["jiyou", "dayou"],
    &["youz"],
    &["pianyou", "shaoyou"],
];
const SRC_VERBS: [Cluster; 2] = [&["go", "walk", "head", "move"], &["stop", "wait", "halt"]];
const TGT_VERBS: [Cluster; 2] = [
    &["zou", "xing", "qian", "yidon"],
    &["tingz", "dengd", "zhuzu"],
];

const SRC_CONNECTIVES: Cluster = &["then", "next", "afterwards"];
const TGT_CONNECTIVES: Cluster = &["ranho", "zaij"];
const SRC_RELATIONS: [Cluster; 2] = [&["toward", "past", "by"], &["at", "near", "beside"]];
const TGT_RELATIONS: [Cluster; 2] = [&["pang", "guo"], &["zai", "fuji"]];
const SRC_ARTICLES: Cluster = &["the"];
const TGT_PARTICLES: Cluster = &["le"];
const SRC_PUNCT: [&str; 2] = [",", "."];
const TGT_PUNCT: [&str; 2] = ["，", "。"];

pub const UNK_TEXT: &str = "<unk>";

/// Every surface form of both languages with a stable id. Id 0 is `<unk>`.
#[derive(Debug, Clone)]
pub struct Lexicon {
    n_categories: usize,
    n_attributes: usize,
    entries: Vec<Entry>,
    by_text: HashMap<String, u32>,
    // (language, role, concept) -> form ids
    clusters: HashMap<(Language, Role, usize), Vec<u32>>,
}

impl Lexicon {
    pub fn new(n_categories: usize, n_attributes: usize) -> Result<Self, LangError> {
        if n_categories == 0 || n_categories > SRC_CATEGORIES.len() {
            return Err(LangError::Lexicon(format!(
                "categories must be 1..={}, got {n_categories}",
                SRC_CATEGORIES.len()
            )));
        }
        if n_attributes == 0 || n_attributes > SRC_ATTRIBUTES.len() {
            return Err(LangError::Lexicon(format!(
                "attributes must be 1..={}, got {n_attributes}",
                SRC_ATTRIBUTES.len()
            )));
        }
        let mut lex = Self {
            n_categories,
            n_attributes,
            entries: Vec::new(),
            by_text: HashMap::new(),
            clusters: HashMap::new(),
        };
        lex.push(UNK_TEXT, None, Role::Unknown, 0, 0)?;
        use Language::{Source as S, Target as T};
        for (lang, cats, attrs, dirs, verbs) in [
            (
                S,
                &SRC_CATEGORIES,
                &SRC_ATTRIBUTES,
                &SRC_DIRECTIONS,
                &SRC_VERBS,
            ),
            (
                T,
                &TGT_CATEGORIES,
                &TGT_ATTRIBUTES,
                &TGT_DIRECTIONS,
                &TGT_VERBS,
            ),
        ] {
            lex.push_clusters(lang, Role::Category, &cats[..n_categories])?;
            lex.push_clusters(lang, Role::Attribute, &attrs[..n_attributes])?;
            lex.push_clusters(lang, Role::Direction, dirs)?;
            lex.push_clusters(lang, Role::Verb, verbs)?;
        }
        lex.push_clusters(S, Role::Connective, &[SRC_CONNECTIVES])?;
        lex.push_clusters(S, Role::Relation, &SRC_RELATIONS)?;
        lex.push_clusters(S, Role::Article, &[SRC_ARTICLES])?;
        lex.push_clusters(T, Role::Connective, &[TGT_CONNECTIVES])?;
        lex.push_clusters(T, Role::Relation, &TGT_RELATIONS)?;
        lex.push_clusters(T, Role::Particle, &[TGT_PARTICLES])?;
        for (i, p) in SRC_PUNCT.iter().enumerate() {
            lex.push(p, Some(S), Role::Punct, i, 0)?;
        }
        for (i, p) in TGT_PUNCT.iter().enumerate() {
            lex.push(p, Some(T), Role::Punct, i, 0)?;
        }
        Ok(lex)
    }

    fn push_clusters(
        &mut self,
        lang: Language,
        role: Role,
        clusters: &[Cluster],
    ) -> Result<(), LangError> {
        for (concept, forms) in clusters.iter().enumerate() {
            for (form, text) in forms.iter().enumerate() {
                self.push(text, Some(lang), role, concept, form)?;
            }
        }
        Ok(())
    }

    fn push(
        &mut self,
        text: &str,
        language: Option<Language>,
        role: Role,
        concept: usize,
        form: usize,
    ) -> Result<(), LangError> {
        let id = self.entries.len() as u32;
        if self.by_text.insert(text.to_string(), id).is_some() {
            return Err(LangError::Lexicon(format!(
                "surface form {text:?} defined twice"
            )));
        }
        if let Some(lang) = language {
            self.clusters
                .entry((lang, role, concept))
                .or_default()
                .push(id);
        }
        self.entries.push(Entry {
            text: text.to_string(),
            language,
            role,
            concept,
            form,
        });
        Ok(())
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn n_attributes(&self) -> usize {
        self.n_attributes
    }

    pub fn unk(&self) -> u32 {
        0
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn entry(&self, id: u32) -> Option<&Entry> {
        self.entries.get(id as usize)
    }

    pub fn text(&self, id: u32) -> &str {
        self.entries
            .get(id as usize)
            .map_or(UNK_TEXT, |e| e.text.as_str())
    }

    pub fn id(&self, text: &str) -> Option<u32> {
        self.by_text.get(text).copied()
    }

    /// Surface forms of one concept, in form order.
    pub fn cluster(&self, lang: Language, role: Role, concept: usize) -> &[u32] {
        self.clusters
            .get(&(lang, role, concept))
            .map_or(&[], Vec::as_slice)
    }

    /// Number of concepts of a role in a language.
    pub fn concepts(&self, lang: Language, role: Role) -> usize {
        (0..)
            .take_while(|&c| self.clusters.contains_key(&(lang, role, c)))
            .count()
    }

    /// The same concept and form in the other language, for content words.
    pub fn translate_content(&self, id: u32) -> Option<u32> {
        let e = self.entry(id)?;
        if !e.role.is_content() {
            return None;
        }
        let other = e.language?.other();
        self.cluster(other, e.role, e.concept).get(e.form).copied()
    }

    pub fn punct(&self, lang: Language, final_stop: bool) -> u32 {
        self.cluster(lang, Role::Punct, final_stop as usize)[0]
    }

    pub fn is_punct(&self, id: u32) -> bool {
        self.entry(id).is_some_and(|e| e.role == Role::Punct)
    }

    pub fn is_punct_text(&self, text: &str) -> bool {
        self.id(text).is_some_and(|id| self.is_punct(id))
    }
}
