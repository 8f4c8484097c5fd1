//! The video knowledge base: an immutable index from city-level location
//! names to synthetic video entries and their world fixtures.
//!
//! Real deployments would index actual camera footage; this crate ships a
//! deterministic stand-in. Every location carries a [`WorldFixture`]
//! describing what the (imaginary) video at that location contains, and the
//! simulated tools answer queries by reading those fixtures. The shipped
//! 125-location default base is generated from a seed; the city names are
//! synthetic placeholders, not data about real places.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ground truth about one location's video feed.
///
/// Identity-style sets (`identities`, `plates`, `vehicles`) hold the ids a
/// matching tool can find there; `actions` labels what each identity is
/// doing. Ordered collections keep serialization byte-stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldFixture {
    pub identities: BTreeSet<String>,
    pub plates: BTreeSet<String>,
    pub vehicles: BTreeSet<String>,
    pub crowd_count: u32,
    pub scene_label: String,
    pub fire_present: bool,
    pub violence_present: bool,
    pub actions: BTreeMap<String, String>,
    pub poses_available: bool,
}

impl WorldFixture {
    fn validate(&self) -> Result<(), String> {
        if (self.crowd_count as usize) < self.identities.len() {
            return Err(format!(
                "crowd_count {} is below the {} known identities",
                self.crowd_count,
                self.identities.len()
            ));
        }
        for identity in self.actions.keys() {
            if !self.identities.contains(identity) {
                return Err(format!("action label for unknown identity {identity}"));
            }
        }
        Ok(())
    }
}

/// One indexed video: where it was recorded, an opaque media identifier,
/// and the fixture the simulated tools consult.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub location: String,
    pub media_ref: String,
    #[serde(flatten)]
    pub fixture: WorldFixture,
}

/// Errors from building or loading a knowledge base.
#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("entry {location}: {message}")]
    Invalid { location: String, message: String },
}

/// Immutable index from location name to [`VideoEntry`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KnowledgeBase {
    entries: BTreeMap<String, VideoEntry>,
}

impl KnowledgeBase {
    /// Builds a base from entries, verifying every invariant: unique
    /// locations (also case-insensitively, so lenient lookup stays
    /// unambiguous), unique media refs, and per-fixture coherence.
    pub fn from_entries(entries: Vec<VideoEntry>) -> Result<KnowledgeBase, KnowledgeError> {
        let mut base = KnowledgeBase::default();
        let mut lowered = BTreeSet::new();
        let mut media_refs = BTreeSet::new();
        for entry in entries {
            let invalid = |message: String| KnowledgeError::Invalid {
                location: entry.location.clone(),
                message,
            };
            if entry.location.trim() != entry.location || entry.location.is_empty() {
                return Err(invalid("location must be non-empty and trimmed".to_string()));
            }
            if !lowered.insert(entry.location.to_lowercase()) {
                return Err(invalid("duplicate location".to_string()));
            }
            if !media_refs.insert(entry.media_ref.clone()) {
                return Err(invalid(format!("duplicate media_ref {}", entry.media_ref)));
            }
            entry.fixture.validate().map_err(|message| KnowledgeError::Invalid {
                location: entry.location.clone(),
                message,
            })?;
            base.entries.insert(entry.location.clone(), entry);
        }
        Ok(base)
    }

    /// Reads a base from a line-delimited fixture file (one JSON record per
    /// location, UTF-8). A malformed line fails the load with its 1-based
    /// line number; invariant violations name the offending entry.
    pub fn load(path: &Path) -> Result<KnowledgeBase, KnowledgeError> {
        let text = fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (index, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let entry: VideoEntry = serde_json::from_str(line).map_err(|err| {
                KnowledgeError::Malformed { line: index + 1, message: err.to_string() }
            })?;
            entries.push(entry);
        }
        KnowledgeBase::from_entries(entries)
    }

    /// Writes the base in the format [`KnowledgeBase::load`] reads. Entries
    /// are ordered by location, so equal bases produce identical bytes.
    pub fn save(&self, path: &Path) -> Result<(), KnowledgeError> {
        let mut out = String::new();
        for entry in self.entries.values() {
            out.push_str(&serde_json::to_string(entry).expect("entries serialize"));
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Resolves a location name. Exact match after trimming; lenient mode is
    /// additionally case-insensitive. Not-found is a normal result.
    pub fn lookup(&self, location: &str, lenient: bool) -> Option<&VideoEntry> {
        let wanted = location.trim();
        if let Some(entry) = self.entries.get(wanted) {
            return Some(entry);
        }
        if lenient {
            let wanted = wanted.to_lowercase();
            return self
                .entries
                .values()
                .find(|entry| entry.location.to_lowercase() == wanted);
        }
        None
    }

    /// All location names, sorted lexicographically.
    pub fn list_locations(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = &VideoEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The two-city world used throughout examples and tests: every tool has
    /// a hit path in one city and a miss path in the other.
    pub fn demo() -> KnowledgeBase {
        KnowledgeBase::from_entries(vec![demo_cairo(), demo_paris()])
            .expect("demo fixtures satisfy the invariants")
    }

    /// The shipped 125-location world, generated deterministically from a
    /// seed. The demo cities keep their documented fixtures; the rest are
    /// synthesized per location.
    pub fn default_base(seed: u64) -> KnowledgeBase {
        let entries = CITY_NAMES
            .iter()
            .map(|&city| match city {
                "Cairo" => demo_cairo(),
                "Paris" => demo_paris(),
                _ => synthesize_entry(city, seed),
            })
            .collect();
        KnowledgeBase::from_entries(entries).expect("generated fixtures satisfy the invariants")
    }
}

fn demo_cairo() -> VideoEntry {
    VideoEntry {
        location: "Cairo".to_string(),
        media_ref: "vid_cairo.mp4".to_string(),
        fixture: WorldFixture {
            identities: ["suspect_A".to_string()].into(),
            plates: ["AB123".to_string()].into(),
            vehicles: ["car_9".to_string()].into(),
            crowd_count: 42,
            scene_label: "street".to_string(),
            fire_present: false,
            violence_present: true,
            actions: [("suspect_A".to_string(), "running".to_string())].into(),
            poses_available: true,
        },
    }
}

fn demo_paris() -> VideoEntry {
    VideoEntry {
        location: "Paris".to_string(),
        media_ref: "vid_paris.mp4".to_string(),
        fixture: WorldFixture {
            identities: BTreeSet::new(),
            plates: BTreeSet::new(),
            vehicles: BTreeSet::new(),
            crowd_count: 7,
            scene_label: "mall".to_string(),
            fire_present: true,
            violence_present: false,
            actions: BTreeMap::new(),
            poses_available: true,
        },
    }
}

const SCENE_LABELS: [&str; 10] = [
    "street", "mall", "park", "station", "parking lot", "stadium", "market", "harbor",
    "airport", "plaza",
];

const ACTION_LABELS: [&str; 6] =
    ["running", "walking", "fighting", "loitering", "cycling", "waving"];

fn location_slug(location: &str) -> String {
    location.to_lowercase().replace(' ', "_")
}

/// Stable 64-bit mix of a seed and a text tag (FNV-1a over both), used to
/// give every location and every session its own RNG stream so results do
/// not depend on generation order.
pub(crate) fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |byte: u8| {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for byte in seed.to_le_bytes() {
        eat(byte);
    }
    for byte in tag.bytes() {
        eat(byte);
    }
    hash
}

fn synthesize_entry(city: &str, seed: u64) -> VideoEntry {
    let slug = location_slug(city);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &slug));

    let identities: BTreeSet<String> = (0..rng.gen_range(1..=3usize))
        .map(|index| format!("suspect_{slug}_{index}"))
        .collect();
    let plates: BTreeSet<String> = (0..rng.gen_range(1..=2usize))
        .map(|_| {
            let letters: String =
                (0..2).map(|_| char::from(rng.gen_range(b'A'..=b'Z'))).collect();
            format!("{letters}{:03}", rng.gen_range(0..1000))
        })
        .collect();
    let vehicles: BTreeSet<String> = (0..rng.gen_range(1..=2usize))
        .map(|index| format!("car_{slug}_{index}"))
        .collect();
    let mut actions = BTreeMap::new();
    for identity in &identities {
        if rng.gen_bool(0.6) {
            let label = ACTION_LABELS[rng.gen_range(0..ACTION_LABELS.len())];
            actions.insert(identity.clone(), label.to_string());
        }
    }

    VideoEntry {
        location: city.to_string(),
        media_ref: format!("vid_{slug}.mp4"),
        fixture: WorldFixture {
            crowd_count: rng.gen_range(0..=120u32).max(identities.len() as u32),
            scene_label: SCENE_LABELS[rng.gen_range(0..SCENE_LABELS.len())].to_string(),
            fire_present: rng.gen_bool(0.5),
            violence_present: rng.gen_bool(0.5),
            poses_available: rng.gen_bool(0.8),
            identities,
            plates,
            vehicles,
            actions,
        },
    }
}

/// The 125 city-level location names of the default base. Synthetic choice:
/// the benchmark needs city-style names, not facts about these cities.
pub const CITY_NAMES: [&str; 125] = [
    "Abuja", "Accra", "Addis Ababa", "Algiers", "Amman",
    "Amsterdam", "Ankara", "Athens", "Auckland", "Baghdad",
    "Baku", "Bangkok", "Barcelona", "Beijing", "Beirut",
    "Belgrade", "Berlin", "Bogota", "Boston", "Brasilia",
    "Bratislava", "Brussels", "Bucharest", "Budapest", "Buenos Aires",
    "Cairo", "Calgary", "Canberra", "Cape Town", "Caracas",
    "Casablanca", "Chengdu", "Chicago", "Colombo", "Copenhagen",
    "Dakar", "Dallas", "Damascus", "Dhaka", "Doha",
    "Dubai", "Dublin", "Durban", "Edinburgh", "Frankfurt",
    "Geneva", "Guangzhou", "Hanoi", "Harare", "Havana",
    "Helsinki", "Ho Chi Minh City", "Hong Kong", "Honolulu", "Houston",
    "Istanbul", "Jakarta", "Johannesburg", "Kampala", "Karachi",
    "Kathmandu", "Kigali", "Kingston", "Kinshasa", "Kuala Lumpur",
    "Kyiv", "Lagos", "Lahore", "Lima", "Lisbon",
    "Ljubljana", "London", "Los Angeles", "Luanda", "Lusaka",
    "Luxembourg", "Lyon", "Madrid", "Manila", "Marrakesh",
    "Melbourne", "Mexico City", "Miami", "Milan", "Minsk",
    "Montevideo", "Montreal", "Moscow", "Mumbai", "Munich",
    "Nairobi", "Naples", "New Delhi", "New York", "Nicosia",
    "Oslo", "Ottawa", "Paris", "Perth", "Prague",
    "Quito", "Reykjavik", "Riga", "Rome", "Rotterdam",
    "San Francisco", "Santiago", "Sao Paulo", "Seattle", "Seoul",
    "Shanghai", "Singapore", "Sofia", "Stockholm", "Sydney",
    "Taipei", "Tallinn", "Tashkent", "Tbilisi", "Tehran",
    "Tokyo", "Toronto", "Tunis", "Vienna", "Warsaw",
];

#[cfg(test)]
mod tests {
    use super::*;

    // ---- demo fixtures ----

    #[test]
    fn demo_base_matches_documented_fixtures() {
        let base = KnowledgeBase::demo();
        assert_eq!(base.len(), 2);

        let cairo = &base.lookup("Cairo", false).unwrap().fixture;
        assert!(cairo.identities.contains("suspect_A"));
        assert!(cairo.plates.contains("AB123"));
        assert!(cairo.vehicles.contains("car_9"));
        assert_eq!(cairo.crowd_count, 42);
        assert_eq!(cairo.scene_label, "street");
        assert!(!cairo.fire_present);
        assert!(cairo.violence_present);
        assert_eq!(cairo.actions.get("suspect_A").unwrap(), "running");
        assert!(cairo.poses_available);

        let paris = &base.lookup("Paris", false).unwrap().fixture;
        assert!(paris.identities.is_empty());
        assert!(paris.plates.is_empty());
        assert!(paris.vehicles.is_empty());
        assert_eq!(paris.crowd_count, 7);
        assert_eq!(paris.scene_label, "mall");
        assert!(paris.fire_present);
        assert!(!paris.violence_present);
        assert!(paris.actions.is_empty());
        assert!(paris.poses_available);
    }

    // ---- default base ----

    #[test]
    fn default_base_has_125_locations() {
        let base = KnowledgeBase::default_base(7);
        assert_eq!(base.len(), 125);
        assert_eq!(base.list_locations().len(), 125);
    }

    #[test]
    fn default_base_keeps_demo_cities_verbatim() {
        let base = KnowledgeBase::default_base(7);
        assert_eq!(base.lookup("Cairo", false).unwrap(), &demo_cairo());
        assert_eq!(base.lookup("Paris", false).unwrap(), &demo_paris());
    }

    #[test]
    fn default_base_is_seed_deterministic() {
        assert_eq!(KnowledgeBase::default_base(7), KnowledgeBase::default_base(7));
        assert_ne!(KnowledgeBase::default_base(7), KnowledgeBase::default_base(8));
    }

    #[test]
    fn city_names_are_unique_even_case_insensitively() {
        let lowered: BTreeSet<String> =
            CITY_NAMES.iter().map(|city| city.to_lowercase()).collect();
        assert_eq!(lowered.len(), 125);
    }

    // ---- lookup ----

    #[test]
    fn lookup_trims_and_lenient_ignores_case() {
        let base = KnowledgeBase::demo();
        assert!(base.lookup("Cairo", false).unwrap().fixture.violence_present);
        assert!(base.lookup("  Cairo ", false).is_some());
        assert!(base.lookup("Atlantis", false).is_none());
        assert!(base.lookup("cairo", false).is_none());
        assert_eq!(
            base.lookup("cairo", true).unwrap().location,
            base.lookup("Cairo", false).unwrap().location,
        );
    }

    #[test]
    fn every_listed_location_resolves() {
        let base = KnowledgeBase::default_base(7);
        let listed = base.list_locations();
        assert!(listed.windows(2).all(|pair| pair[0] < pair[1]), "sorted and unique");
        for location in listed {
            assert!(base.lookup(&location, false).is_some());
        }
    }

    // ---- file IO ----

    #[test]
    fn save_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("base.jsonl");
        let base = KnowledgeBase::default_base(7);
        base.save(&path).unwrap();
        assert_eq!(KnowledgeBase::load(&path).unwrap(), base);
    }

    #[test]
    fn empty_file_loads_as_empty_base() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        fs::write(&path, "").unwrap();
        let base = KnowledgeBase::load(&path).unwrap();
        assert!(base.is_empty());
        assert!(base.lookup("Cairo", true).is_none());
    }

    #[test]
    fn duplicate_location_fails_naming_the_entry() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.jsonl");
        let mut text = String::new();
        let cairo = serde_json::to_string(&demo_cairo()).unwrap();
        text.push_str(&cairo);
        text.push('\n');
        text.push_str(&cairo.replace("vid_cairo.mp4", "vid_cairo_2.mp4"));
        text.push('\n');
        fs::write(&path, text).unwrap();
        match KnowledgeBase::load(&path) {
            Err(KnowledgeError::Invalid { location, message }) => {
                assert_eq!(location, "Cairo");
                assert!(message.contains("duplicate"));
            }
            other => panic!("expected duplicate-location error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_is_reported_with_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = serde_json::to_string(&demo_paris()).unwrap();
        fs::write(&path, format!("{good}\n{{\"location\": \"X\"}}\n")).unwrap();
        match KnowledgeBase::load(&path) {
            Err(KnowledgeError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed-line error, got {other:?}"),
        }
    }

    #[test]
    fn fixture_invariants_are_enforced() {
        let mut understaffed = demo_cairo();
        understaffed.fixture.crowd_count = 0;
        assert!(matches!(
            KnowledgeBase::from_entries(vec![understaffed]),
            Err(KnowledgeError::Invalid { .. }),
        ));

        let mut phantom_actor = demo_cairo();
        phantom_actor
            .fixture
            .actions
            .insert("nobody".to_string(), "running".to_string());
        assert!(matches!(
            KnowledgeBase::from_entries(vec![phantom_actor]),
            Err(KnowledgeError::Invalid { .. }),
        ));

        let mut cloned_media = demo_paris();
        cloned_media.location = "Paris North".to_string();
        assert!(matches!(
            KnowledgeBase::from_entries(vec![demo_paris(), cloned_media]),
            Err(KnowledgeError::Invalid { .. }),
        ));
    }
}
