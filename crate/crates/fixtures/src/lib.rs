//! Synthetic transliterated texts with realistic orthography.
//!
//! Each language draws words from a small vocabulary with Zipf-like
//! frequencies, so letter statistics resemble the real language while the
//! text itself is generated. Sizes default to the reference corpus sizes
//! (non-space glyph counts).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Language {
    English,
    Spanish,
    Tagalog,
    Finnish,
    Luwian,
    Babylonian,
    Hurrian,
    CyproMinoan,
}

impl Language {
    pub const ALL: [Language; 8] = [
        Language::English,
        Language::Spanish,
        Language::Tagalog,
        Language::Finnish,
        Language::Luwian,
        Language::Babylonian,
        Language::Hurrian,
        Language::CyproMinoan,
    ];

    /// The seven-language roster without Finnish.
    pub const SEVEN: [Language; 7] = [
        Language::English,
        Language::Spanish,
        Language::Tagalog,
        Language::Luwian,
        Language::Babylonian,
        Language::Hurrian,
        Language::CyproMinoan,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Language::English => "english",
            Language::Spanish => "spanish",
            Language::Tagalog => "tagalog",
            Language::Finnish => "finnish",
            Language::Luwian => "luwian",
            Language::Babylonian => "babylonian",
            Language::Hurrian => "hurrian",
            Language::CyproMinoan => "minoan",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Language::English => "English",
            Language::Spanish => "Spanish",
            Language::Tagalog => "Tagalog",
            Language::Finnish => "Finnish",
            Language::Luwian => "Luwian",
            Language::Babylonian => "Babylonian",
            Language::Hurrian => "Hurrian",
            Language::CyproMinoan => "Cypro-Minoan",
        }
    }

    /// Manifest scheme name.
    pub fn scheme(self) -> &'static str {
        match self {
            Language::CyproMinoan => "sign-number",
            _ => "codepoint",
        }
    }

    /// Reference size in non-space glyphs.
    pub fn reference_size(self) -> usize {
        match self {
            Language::English => 8356,
            Language::Spanish => 8019,
            Language::Tagalog => 8441,
            Language::Finnish => 11714,
            Language::Luwian => 9065,
            Language::Babylonian => 5563,
            Language::Hurrian => 5255,
            Language::CyproMinoan => 2070,
        }
    }

    fn modern(self) -> bool {
        matches!(self, Language::English | Language::Spanish | Language::Tagalog | Language::Finnish)
    }

    fn vocabulary(self) -> &'static [&'static str] {
        match self {
            Language::English => ENGLISH,
            Language::Spanish => SPANISH,
            Language::Tagalog => TAGALOG,
            Language::Finnish => FINNISH,
            Language::Luwian => LUWIAN,
            Language::Babylonian => BABYLONIAN,
            Language::Hurrian => HURRIAN,
            Language::CyproMinoan => &[],
        }
    }
}

const ENGLISH: &[&str] = &[
    "the", "of", "and", "to", "in", "a", "is", "that", "for", "on", "with", "as", "by", "are", "this", "be", "we", "from", "market",
    "returns", "price", "which", "an", "volatility", "model", "risk", "not", "or", "at", "it", "these", "our", "have", "has", "data",
    "financial", "stock", "index", "period", "results", "between", "their", "than", "investors", "value", "asset", "time", "series",
    "effect", "table", "shows", "significant", "portfolio", "trading", "during", "crisis", "estimate", "were", "also", "more", "can",
    "analysis", "evidence", "rate", "interest", "higher", "lower", "sample", "variables", "firms", "bank", "policy", "paper",
];

const SPANISH: &[&str] = &[
    "de", "la", "que", "el", "en", "y", "a", "los", "del", "se", "las", "por", "un", "con", "una", "su", "para", "es", "al", "como",
    "más", "novela", "escritor", "obra", "sus", "madrid", "galdós", "fue", "años", "también", "españa", "literatura", "teatro",
    "episodios", "nacionales", "vida", "sociedad", "siglo", "desde", "sobre", "entre", "personajes", "época", "pérez", "benito",
    "canarias", "realismo", "escribió", "publicó", "historia", "política", "él", "ciudad", "durante", "trabajo", "después", "según",
    "muerte", "académico", "nación", "país", "niño", "pequeño", "mujer", "guerra", "primera", "serie", "dramas", "crítica",
];

const TAGALOG: &[&str] = &[
    "ang", "ng", "sa", "mga", "na", "at", "ay", "pilipinas", "isang", "bansa", "ito", "kanyang", "mula", "noong", "bilang", "pang",
    "siya", "may", "para", "kapuluan", "pulo", "timog", "silangang", "asya", "karagatang", "pasipiko", "tao", "wika", "tagalog",
    "pamahalaan", "republika", "maynila", "lungsod", "kasaysayan", "espanyol", "amerikano", "kalayaan", "taon", "rehiyon",
    "lalawigan", "pangulo", "katutubo", "kultura", "relihiyon", "katoliko", "pinakamalaking", "ekonomiya", "lupa", "dagat", "bundok",
    "hilaga", "kanluran", "ilog", "bayan", "nito", "din", "rin", "lamang", "dahil", "upang", "ngunit", "kung", "hindi", "mayroon",
];

const FINNISH: &[&str] = &[
    "ja", "on", "hän", "että", "se", "oli", "kalevala", "väinämöinen", "runo", "ei", "niin", "kun", "mutta", "joka", "sanoi",
    "vanha", "laulaja", "pohjolan", "emäntä", "louhi", "sampo", "ilmarinen", "seppä", "lemminkäinen", "kullervo", "mieleni",
    "minun", "tekevi", "aivoni", "ajattelevi", "lähteäni", "laulamahan", "sanoiksi", "sukeutua", "tämä", "nyt", "myös", "jo",
    "päivä", "yö", "maa", "meri", "järvi", "metsä", "kylä", "äiti", "isä", "tyttö", "poika", "sydän", "kädet", "jäälle", "pääsi",
    "kävi", "tähti", "kuu", "aurinko", "tuli", "vesi", "ilma", "ääni", "sävel", "kantele", "höyhen",
];

const LUWIAN: &[&str] = &[
    "a-pa-a", "ti-wa-ta-aš", "ma-aš-ša-na-an-za", "ḫu-u-ma-an-za", "za-a-ti", "a-ad-du-wa-al", "wa-a", "pa-a-ri-i", "ta-ti-iš",
    "an-ni-iš", "ku-wa-ti", "i-ši-ḫa-a", "ša-an-ta", "ḫi-ru-ut", "pí-ia", "ma-al-ḫa-aš-ša", "ša-ar-ri", "tar-ḫu-un-za", "ku-wa-an",
    "ti-i-ša-an", "a-ri-ia-at-ta", "la-a-la", "u-ut-tar", "a-aš-du", "ḫal-li-iš", "wa-aš-ḫa", "da-a-ú", "za-an-ta", "ir-ḫu-wa",
    "ku-iš", "ḫa-at-tu-ša", "ni-iš", "mu-ú", "pár-ra-an", "ap-pa-an", "ša-ra-a", "ka-at-ta", "wa-al-la", "ti-ia-am-mi", "ú-wa-a",
];

const BABYLONIAN: &[&str] = &[
    "a-na", "be-lí-ia", "qí-bí-ma", "um-ma", "ìr-ka-ma", "šar-ru", "ḫa-za-an-nu", "ṣa-bi", "ṭup-pí", "a-wi-lum", "i-na", "ša",
    "ù", "la", "iš-tu", "a-lim", "ki-ma", "lu-ú", "šu-ul-mu", "e-li", "ma-ḫar", "bi-tim", "ṣe-ri", "ṭe-e-mu", "il-ku", "e-pé-eš",
    "šu-nu", "a-ḫu-ú-a", "ni-ši", "ka-lu", "e-ri-iš", "ú-ša-bi-la", "ma-a-tim", "qa-qa-ar", "eq-lam", "ša-at-tam", "i-ša-ak-ka-nu",
    "id-di-in", "ú-ul", "a-ša-ap-pa-ar", "ṣú-ḫa-ru", "ṭà-ab", "du-up-pa-am",
];

const HURRIAN: &[&str] = &[
    "ti-wi", "šu-ú-wa", "at-ta-i-ip", "ḫur-ri", "en-na", "ta-še-e-na", "šen-iff-u-ú", "te-šu-up", "ke-el-te-e-ni", "ši-mi-gi",
    "ku-ma-ar-wi", "a-i-ma-a-ni-i-in", "ša-a-la", "ne-e-ri", "ti-ša-an", "pa-a-ḫi", "ḫa-šu-ši", "mu-ú-ši", "ú-nu-ú-ša", "i-še-e-na",
    "am-ma-ti", "ki-ib-li", "tu-ú-ri", "ša-wa-al-la", "fa-a-ri", "ḫa-a-ar", "ke-el-ti", "a-ru-ši", "ša-ar-ri", "ni-ḫa-ar-ri",
    "ú-ru-uš", "pu-ut-ki", "e-ni-iš", "ta-a-ti", "šu-ú-ni",
];

/// Generates a text of exactly `size` non-space glyphs.
pub fn text(language: Language, size: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (language as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    if language == Language::CyproMinoan {
        return sign_text(&mut rng, size);
    }
    let vocab = language.vocabulary();
    let zipf = WeightedIndex::new((1..=vocab.len()).map(|r| 1.0 / r as f64)).expect("non-empty vocabulary");
    let mut out = String::new();
    let mut count = 0usize;
    let mut sentence_start = true;
    let mut words_in_sentence = 0usize;
    while count < size {
        let word = vocab[zipf.sample(&mut rng)];
        let mut token = if sentence_start && language.modern() { capitalize(word) } else { word.to_string() };
        sentence_start = false;
        words_in_sentence += 1;
        if language.modern() && words_in_sentence > 6 && rng.random_bool(0.12) {
            token.push('.');
            sentence_start = true;
            words_in_sentence = 0;
        } else if language.modern() && rng.random_bool(0.05) {
            token.push(',');
        }
        let glyphs: Vec<char> = token.chars().collect();
        let take = glyphs.len().min(size - count);
        if !out.is_empty() {
            out.push(if words_in_sentence == 0 && rng.random_bool(0.2) { '\n' } else { ' ' });
        }
        out.extend(&glyphs[..take]);
        count += take;
    }
    out.push('\n');
    out
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Hyphen-joined sign numbers (1–114), words of 2–12 signs.
fn sign_text(rng: &mut ChaCha8Rng, size: usize) -> String {
    let signs = WeightedIndex::new((1..=114).map(|r| 1.0 / (r as f64).powf(0.8))).expect("positive weights");
    // a fixed permutation so frequent signs are not simply the small numbers
    let mut order: Vec<u32> = (1..=114).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut out = String::new();
    let mut count = 0usize;
    let mut words = 0usize;
    while count < size {
        let len = rng.random_range(2..=12).min(size - count);
        if words > 0 {
            out.push(if words % 9 == 0 { '\n' } else { ' ' });
        }
        for k in 0..len {
            if k > 0 {
                out.push('-');
            }
            let _ = write!(out, "{}", order[signs.sample(rng)]);
        }
        count += len;
        words += 1;
    }
    out.push('\n');
    out
}

/// One manifest entry to write.
#[derive(Debug, Clone)]
pub struct Entry {
    pub language: Language,
    pub size: usize,
}

impl Entry {
    pub fn reference(language: Language) -> Self {
        Entry { language, size: language.reference_size() }
    }
}

/// Writes the texts and a `corpus.toml` manifest into `dir`; returns the manifest path.
pub fn write_corpus(dir: &Path, entries: &[Entry], seed: u64, normalization_divisor: Option<f64>) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir.join("texts"))?;
    let mut manifest = String::new();
    if let Some(d) = normalization_divisor {
        let _ = writeln!(manifest, "normalization_divisor = {d:?}\n");
    }
    for e in entries {
        let id = e.language.id();
        let file = format!("texts/{id}.txt");
        std::fs::write(dir.join(&file), text(e.language, e.size, seed))?;
        let _ = writeln!(
            manifest,
            "[[language]]\nid = \"{id}\"\nname = \"{}\"\npath = \"{file}\"\nscheme = \"{}\"\nsource = \"synthetic\"\n",
            e.language.name(),
            e.language.scheme()
        );
    }
    let path = dir.join("corpus.toml");
    std::fs::write(&path, manifest)?;
    Ok(path)
}

/// The full reference roster at reference sizes.
pub fn reference_corpus(dir: &Path, roster: &[Language], seed: u64) -> std::io::Result<PathBuf> {
    let entries: Vec<Entry> = roster.iter().map(|&l| Entry::reference(l)).collect();
    write_corpus(dir, &entries, seed, None)
}

/// Largest codepoint any generated text can contain; pinning the divisor to
/// it keeps tiles fixed when languages are added to a roster.
pub fn max_codepoint() -> u32 {
    Language::ALL.iter().flat_map(|l| l.vocabulary().iter()).flat_map(|w| w.chars()).flat_map(|c| std::iter::once(c).chain(c.to_uppercase())).map(|c| c as u32).max().unwrap_or(0)
}
