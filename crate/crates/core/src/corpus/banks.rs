//! Built-in word banks: the toolkit ships its own vocabulary so corpus
//! generation is self-contained and reproducible.
//!
//! Nouns and verbs are lemmas with regular inflection only; `plural`,
//! `verb_3sg`, and `verb_past` apply plain suffix rules, so irregular
//! words (mouse, build, run, ...) are deliberately absent from the lemma
//! lists even when they appear in the fixed entity pools.

/// Capital letters usable as entity placeholders, in assignment order.
/// A, I, N, S, W, E are excluded: they occur alone as meaningful words.
pub const ALLOWED_LETTERS: [&str; 20] = [
    "B", "C", "D", "F", "G", "H", "J", "K", "L", "M", "O", "P", "Q", "R", "T", "U", "V", "X", "Y",
    "Z",
];

pub const EXCLUDED_LETTERS: [&str; 6] = ["A", "I", "N", "S", "W", "E"];

/// Function words removed by `strip_function_words`.
pub const STOPWORDS: [&str; 44] = [
    "the", "a", "an", "is", "are", "was", "were", "be", "been", "being", "of", "for", "to", "in",
    "on", "at", "by", "with", "from", "as", "that", "this", "these", "those", "it", "its", "and",
    "or", "but", "not", "no", "has", "have", "had", "do", "does", "did", "will", "would", "can",
    "could", "than", "then", "there",
];

pub const NOUNS: [&str; 212] = [
    "house", "road", "river", "mountain", "forest", "garden", "window", "door", "wall", "floor",
    "roof", "bridge", "tower", "castle", "village", "city", "street", "market", "school",
    "library", "hospital", "station", "airport", "harbor", "island", "valley", "meadow", "field",
    "farm", "barn", "fence", "gate", "path", "trail", "stone", "rock", "cloud", "storm", "wind",
    "sun", "moon", "star", "ocean", "lake", "pond", "stream", "wave", "shore", "beach", "cliff",
    "cave", "hill", "tree", "flower", "bush", "branch", "root", "seed", "plant", "book", "page",
    "letter", "word", "sentence", "story", "poem", "song", "picture", "painting", "drawing",
    "map", "chart", "pencil", "pen", "brush", "canvas", "bottle", "glass", "cup", "plate", "bowl",
    "spoon", "fork", "pot", "pan", "kettle", "basket", "box", "bag", "crate", "barrel", "bucket",
    "rope", "chain", "wire", "nail", "hammer", "ladder", "wheel", "engine", "machine", "robot",
    "computer", "screen", "keyboard", "camera", "phone", "clock", "candle", "torch", "battery",
    "switch", "button", "handle", "key", "card", "coin", "ticket", "stamp", "parcel", "package",
    "gift", "toy", "ball", "kite", "drum", "flute", "violin", "guitar", "piano", "trumpet",
    "bell", "horn", "whistle", "anchor", "sail", "boat", "ship", "canoe", "raft", "truck",
    "wagon", "cart", "bicycle", "train", "plane", "rocket", "satellite", "antenna", "signal",
    "message", "report", "record", "journal", "diary", "recipe", "meal", "dinner", "soup",
    "salad", "bread", "cake", "cookie", "pie", "jam", "honey", "butter", "cheese", "egg", "crown",
    "friend", "neighbor", "visitor", "guest", "student", "worker", "leader", "captain", "soldier",
    "guard", "king", "queen", "prince", "knight", "wizard", "ghost", "hero", "artist", "poet",
    "author", "editor", "merchant", "trader", "customer", "partner", "rival", "team", "group",
    "crowd", "family", "couple", "crew", "band", "choir", "army", "fleet", "herd", "flock",
    "curtain", "blanket", "suitcase", "breeze",
];

pub const VERBS: [&str; 110] = [
    "chase", "watch", "follow", "push", "pull", "lift", "carry", "clean", "paint", "open",
    "close", "move", "help", "call", "cook", "wash", "dry", "play", "stay", "enjoy", "visit",
    "answer", "ask", "borrow", "burn", "bury", "change", "charge", "chew", "climb", "collect",
    "color", "comb", "compare", "cover", "crawl", "cross", "crush", "cry", "dance", "deliver",
    "design", "destroy", "discover", "divide", "dress", "drift", "earn", "empty", "enter",
    "escape", "evaluate", "examine", "explain", "explore", "fasten", "fetch", "fill", "finish",
    "fix", "float", "fold", "gather", "glance", "glow", "greet", "guard", "guess", "guide",
    "harvest", "heal", "heat", "hunt", "hurry", "invite", "join", "jump", "kick", "knock",
    "land", "laugh", "launch", "lean", "learn", "lick", "listen", "load", "lock", "look",
    "lower", "march", "measure", "melt", "mend", "notice", "observe", "offer", "pack", "pass",
    "pick", "place", "point", "polish", "pour", "praise", "prepare", "press", "protect",
    "steer", "slice",
];

pub const ADJECTIVES: [&str; 96] = [
    "red", "blue", "green", "yellow", "purple", "orange", "black", "white", "gray", "brown",
    "pink", "golden", "silver", "big", "small", "large", "tiny", "huge", "tall", "short", "long",
    "wide", "narrow", "thick", "thin", "deep", "shallow", "high", "low", "heavy", "light",
    "fast", "slow", "quick", "quiet", "loud", "bright", "dark", "dim", "clear", "cloudy",
    "dirty", "fresh", "young", "old", "new", "ancient", "modern", "simple", "easy", "hard",
    "soft", "smooth", "rough", "sharp", "dull", "warm", "cold", "hot", "cool", "icy", "windy",
    "rainy", "sunny", "snowy", "foggy", "misty", "happy", "sad", "angry", "calm", "brave", "shy",
    "proud", "humble", "kind", "cruel", "gentle", "fierce", "wild", "tame", "clever", "wise",
    "foolish", "curious", "careful", "careless", "lazy", "busy", "eager", "tired", "sleepy",
    "hungry", "strong", "weak", "rusty",
];

pub const ADVERBS: [&str; 24] = [
    "quickly", "slowly", "quietly", "loudly", "gently", "fiercely", "bravely", "calmly",
    "eagerly", "carefully", "carelessly", "gracefully", "awkwardly", "proudly", "happily",
    "sadly", "angrily", "wisely", "foolishly", "neatly", "barely", "boldly", "brightly",
    "softly",
];

// ---------------------------------------------------------------------------
// Fixed entity pools for the in-context-learning tasks
// ---------------------------------------------------------------------------

pub const FRUITS: [&str; 22] = [
    "apple", "banana", "mango", "peach", "pear", "plum", "cherry", "grape", "lemon", "lime",
    "melon", "kiwi", "apricot", "fig", "papaya", "guava", "coconut", "strawberry", "raspberry",
    "blueberry", "pineapple", "quince",
];

pub const MONTHS: [&str; 22] = [
    "January", "February", "March", "April", "May", "June", "July", "August", "September",
    "October", "November", "December", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "oct",
    "nov", "dec",
];

pub const FURNITURE: [&str; 22] = [
    "table", "chair", "sofa", "couch", "desk", "bed", "shelf", "cabinet", "dresser", "stool",
    "bench", "wardrobe", "bookcase", "nightstand", "armchair", "recliner", "ottoman", "futon",
    "crib", "hammock", "mirror", "lamp",
];

pub const PROFESSIONS: [&str; 22] = [
    "doctor", "teacher", "engineer", "lawyer", "nurse", "farmer", "baker", "chef", "pilot",
    "sailor", "painter", "singer", "dancer", "writer", "actor", "judge", "plumber", "carpenter",
    "tailor", "barber", "clerk", "architect",
];

pub const ANIMALS: [&str; 22] = [
    "dog", "cat", "horse", "cow", "sheep", "goat", "pig", "rabbit", "mouse", "fox", "wolf",
    "bear", "lion", "tiger", "deer", "otter", "beaver", "eagle", "owl", "frog", "snake",
    "whale",
];

// ---------------------------------------------------------------------------
// Relation pair banks
// ---------------------------------------------------------------------------
//
// The corpus generator draws most of its (subject, verb), (verb, object)
// and (modifier, noun) choices from these banks, and the relation
// justification tasks use the same pairs as positives, so the "true"
// pairs genuinely occur in training text.

pub const SUBJ_VERB_PAIRS: [(&str, &str); 24] = [
    ("dog", "chase"),
    ("cat", "watch"),
    ("fox", "chase"),
    ("wolf", "hunt"),
    ("farmer", "harvest"),
    ("baker", "cook"),
    ("teacher", "explain"),
    ("doctor", "heal"),
    ("dancer", "dance"),
    ("painter", "paint"),
    ("soldier", "march"),
    ("guard", "protect"),
    ("student", "learn"),
    ("artist", "design"),
    ("merchant", "offer"),
    ("captain", "steer"),
    ("crowd", "gather"),
    ("child", "play"),
    ("visitor", "knock"),
    ("guide", "point"),
    ("hero", "rescue"),
    ("worker", "carry"),
    ("knight", "guard"),
    ("wizard", "explore"),
];

pub const VERB_OBJ_PAIRS: [(&str, &str); 24] = [
    ("chase", "ball"),
    ("open", "door"),
    ("clean", "window"),
    ("carry", "box"),
    ("paint", "wall"),
    ("watch", "moon"),
    ("push", "cart"),
    ("pull", "rope"),
    ("lift", "crate"),
    ("cook", "meal"),
    ("wash", "plate"),
    ("fold", "blanket"),
    ("lock", "gate"),
    ("fix", "engine"),
    ("harvest", "seed"),
    ("deliver", "parcel"),
    ("pack", "suitcase"),
    ("pour", "soup"),
    ("slice", "bread"),
    ("polish", "mirror"),
    ("steer", "boat"),
    ("load", "wagon"),
    ("guard", "castle"),
    ("cross", "bridge"),
];

pub const MOD_NOUN_PAIRS: [(&str, &str); 24] = [
    ("red", "apple"),
    ("tall", "tower"),
    ("old", "house"),
    ("bright", "star"),
    ("heavy", "stone"),
    ("green", "meadow"),
    ("dark", "cave"),
    ("quiet", "library"),
    ("busy", "market"),
    ("ancient", "castle"),
    ("fresh", "bread"),
    ("cold", "river"),
    ("deep", "lake"),
    ("narrow", "path"),
    ("wide", "road"),
    ("golden", "crown"),
    ("sharp", "nail"),
    ("gentle", "breeze"),
    ("fierce", "storm"),
    ("sleepy", "village"),
    ("sunny", "garden"),
    ("foggy", "harbor"),
    ("rusty", "anchor"),
    ("clever", "fox"),
];

pub const PART_WHOLE_PAIRS: [(&str, &str); 24] = [
    ("wheel", "cart"),
    ("engine", "truck"),
    ("page", "book"),
    ("branch", "tree"),
    ("petal", "flower"),
    ("key", "keyboard"),
    ("screen", "phone"),
    ("lens", "camera"),
    ("blade", "fan"),
    ("handle", "door"),
    ("drawer", "desk"),
    ("pedal", "bicycle"),
    ("sail", "boat"),
    ("wing", "plane"),
    ("feather", "eagle"),
    ("root", "plant"),
    ("crust", "bread"),
    ("yolk", "egg"),
    ("seed", "apple"),
    ("string", "guitar"),
    ("step", "ladder"),
    ("spoke", "wheel"),
    ("mast", "ship"),
    ("anchor", "ship"),
];

/// Multi-word entity names used by the knowledge-graph corpus.
pub const ENTITY_NAMES: [&str; 56] = [
    "laser scanner",
    "neural network",
    "graph parser",
    "data pipeline",
    "signal filter",
    "image encoder",
    "speech decoder",
    "language model",
    "vector index",
    "query planner",
    "memory cache",
    "storage engine",
    "protocol stack",
    "message queue",
    "feature extractor",
    "pattern matcher",
    "beam splitter",
    "plasma chamber",
    "carbon fiber",
    "polymer gel",
    "quantum sensor",
    "fusion reactor",
    "radar antenna",
    "sonar probe",
    "gene sequencer",
    "cell culture",
    "enzyme assay",
    "protein marker",
    "tissue sample",
    "neuron model",
    "spike detector",
    "pulse generator",
    "voltage regulator",
    "current amplifier",
    "phase modulator",
    "optic lens",
    "fiber cable",
    "photon counter",
    "particle tracker",
    "cloud cluster",
    "batch scheduler",
    "stream processor",
    "hash table",
    "search tree",
    "sort routine",
    "cache layer",
    "disk array",
    "packet router",
    "error corrector",
    "noise reducer",
    "depth camera",
    "motion tracker",
    "grid solver",
    "mesh builder",
    "wave simulator",
    "heat exchanger",
];

/// Regular plural.
pub fn plural(noun: &str) -> String {
    suffix_es_or_s(noun)
}

/// Regular third-person singular.
pub fn verb_3sg(verb: &str) -> String {
    suffix_es_or_s(verb)
}

/// Regular past tense.
pub fn verb_past(verb: &str) -> String {
    if verb.ends_with('e') {
        format!("{verb}d")
    } else if ends_consonant_y(verb) {
        format!("{}ied", &verb[..verb.len() - 1])
    } else {
        format!("{verb}ed")
    }
}

fn suffix_es_or_s(word: &str) -> String {
    if word.ends_with('s')
        || word.ends_with('x')
        || word.ends_with('z')
        || word.ends_with("ch")
        || word.ends_with("sh")
    {
        format!("{word}es")
    } else if ends_consonant_y(word) {
        format!("{}ies", &word[..word.len() - 1])
    } else {
        format!("{word}s")
    }
}

fn ends_consonant_y(word: &str) -> bool {
    let bytes = word.as_bytes();
    if bytes.len() < 2 || bytes[bytes.len() - 1] != b'y' {
        return false;
    }
    !matches!(bytes[bytes.len() - 2], b'a' | b'e' | b'i' | b'o' | b'u')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inflection_rules() {
        assert_eq!(plural("box"), "boxes");
        assert_eq!(plural("city"), "cities");
        assert_eq!(plural("dog"), "dogs");
        assert_eq!(plural("toy"), "toys");
        assert_eq!(verb_3sg("watch"), "watches");
        assert_eq!(verb_3sg("carry"), "carries");
        assert_eq!(verb_past("chase"), "chased");
        assert_eq!(verb_past("hurry"), "hurried");
        assert_eq!(verb_past("play"), "played");
    }

    #[test]
    fn pools_meet_minimum_sizes() {
        assert!(FRUITS.len() >= 20);
        assert!(MONTHS.len() >= 20);
        assert!(FURNITURE.len() >= 20);
        assert!(PROFESSIONS.len() >= 20);
        assert!(ANIMALS.len() >= 20);
        assert!(NOUNS.len() >= 200);
        assert!(VERBS.len() >= 100);
        assert!(ADJECTIVES.len() + ADVERBS.len() >= 100);
    }

    #[test]
    fn letters_exclude_special_ones() {
        for ex in EXCLUDED_LETTERS {
            assert!(!ALLOWED_LETTERS.contains(&ex));
        }
        assert_eq!(ALLOWED_LETTERS.len(), 20);
    }
}
