//! Seeded task scenes: blocks scattered over free table cells.

use olp_core::scene::{SceneObject, SceneState, Table};
use olp_core::simulator::{table_cells, TaskSpec, BLOCK_SIZE, CELL_MARGIN};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Letter blocks added to spelling scenes besides the word's own letters.
pub const SPELLING_DISTRACTORS: usize = 2;
/// Largest horizontal offset of a block from its cell center (m).
pub const PLACEMENT_JITTER: f64 = 0.005;

#[derive(Debug, Error, PartialEq)]
pub enum SceneGenError {
    #[error("invalid task: {0}")]
    InvalidSpec(String),
    #[error("{needed} blocks do not fit on {available} table cells")]
    PlacementOverflow { needed: usize, available: usize },
}

/// Instance id for the `index`-th (1-based) block of a kind, e.g.
/// `red_block_2` or `letter_block_s_1`.
pub fn instance_id(kind: &str, letter: Option<&str>, index: usize) -> String {
    let mut stem: Vec<String> = kind.split_whitespace().map(str::to_lowercase).collect();
    if let Some(l) = letter {
        stem.push(l.to_lowercase());
    }
    format!("{}_{index}", stem.join("_"))
}

/// (kind, letter) of every block a task needs, before placement.
fn inventory(spec: &TaskSpec, rng: &mut ChaCha8Rng) -> Vec<(String, Option<String>)> {
    match spec {
        TaskSpec::Tower { height } => (0..=*height).map(|_| ("red block".to_string(), None)).collect(),
        TaskSpec::Spelling { word } => {
            let mut letters: Vec<char> = word.chars().map(|c| c.to_ascii_uppercase()).collect();
            let spare: Vec<char> = ('A'..='Z').filter(|c| !letters.contains(c)).collect();
            for _ in 0..SPELLING_DISTRACTORS {
                letters.push(spare[rng.random_range(0..spare.len())]);
            }
            letters.into_iter().map(|c| ("letter block".to_string(), Some(c.to_string()))).collect()
        }
        TaskSpec::Organize { types } => types
            .iter()
            .flat_map(|t| (0..t.count).map(move |_| (block_kind(&t.name), None)))
            .collect(),
    }
}

/// `red` and `red block` both name the kind `red block`.
pub fn block_kind(name: &str) -> String {
    let name = name.trim().to_lowercase();
    if name.ends_with("block") {
        name
    } else {
        format!("{name} block")
    }
}

/// Every block of `spec` standing alone on a distinct random table cell.
pub fn gen_scene(spec: &TaskSpec, seed: u64) -> Result<SceneState, SceneGenError> {
    gen_scene_on(spec, seed, Table::default())
}

pub fn gen_scene_on(spec: &TaskSpec, seed: u64, table: Table) -> Result<SceneState, SceneGenError> {
    spec.validate().map_err(SceneGenError::InvalidSpec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = inventory(spec, &mut rng);
    let mut cells = table_cells(&table, BLOCK_SIZE + CELL_MARGIN);
    if blocks.len() > cells.len() {
        return Err(SceneGenError::PlacementOverflow { needed: blocks.len(), available: cells.len() });
    }
    cells.shuffle(&mut rng);

    let mut scene = SceneState::new(table);
    let half = BLOCK_SIZE / 2.0;
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    for ((kind, letter), [x, y]) in blocks.into_iter().zip(cells) {
        let key = instance_id(&kind, letter.as_deref(), 0);
        let n = counts.entry(key).or_default();
        *n += 1;
        let id = instance_id(&kind, letter.as_deref(), *n);
        let dx = rng.random_range(-PLACEMENT_JITTER..=PLACEMENT_JITTER);
        let dy = rng.random_range(-PLACEMENT_JITTER..=PLACEMENT_JITTER);
        let mut obj = SceneObject::cube(&kind, [x + dx, y + dy, scene.table.height + half], half);
        obj.letter = letter;
        scene.objects.insert(id, obj);
    }
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use olp_core::grounding::{derive_predicates, GeomThresholds};
    use olp_core::pddl::Atom;
    use olp_core::scene::Workspace;
    use olp_core::simulator::BlockType;

    fn overlaps(a: [f64; 4], b: [f64; 4]) -> bool {
        a[0] < b[2] && b[0] < a[2] && a[1] < b[3] && b[1] < a[3]
    }

    #[test]
    fn tower_scene_postconditions() {
        let s = gen_scene(&TaskSpec::Tower { height: 3 }, 7).unwrap();
        assert_eq!(s.objects.len(), 4);
        let fps: Vec<_> = s.objects.values().map(|o| o.footprint()).collect();
        for i in 0..fps.len() {
            for j in i + 1..fps.len() {
                assert!(!overlaps(fps[i], fps[j]));
            }
        }
        let atoms = derive_predicates(&s, &GeomThresholds::default()).unwrap();
        for id in s.objects.keys() {
            assert!(atoms.contains(&Atom::binary("on", "table", id)));
        }
        assert_eq!(s, gen_scene(&TaskSpec::Tower { height: 3 }, 7).unwrap());
        assert_ne!(s, gen_scene(&TaskSpec::Tower { height: 3 }, 8).unwrap());
    }

    #[test]
    fn spelling_letters_and_ids() {
        let s = gen_scene(&TaskSpec::Spelling { word: "ab".into() }, 1).unwrap();
        assert!(s.objects.contains_key("letter_block_a_1"));
        assert!(s.objects.contains_key("letter_block_b_1"));
        assert_eq!(s.objects.len(), 2 + SPELLING_DISTRACTORS);
        let s = gen_scene(&TaskSpec::Spelling { word: "ROBOT".into() }, 1).unwrap();
        assert!(s.objects.contains_key("letter_block_o_2"));
    }

    #[test]
    fn organize_counts() {
        let types = vec![
            BlockType { name: "red".into(), count: 2 },
            BlockType { name: "green block".into(), count: 4 },
            BlockType { name: "blue".into(), count: 3 },
        ];
        let s = gen_scene(&TaskSpec::Organize { types }, 3).unwrap();
        assert_eq!(s.objects.len(), 9);
        assert_eq!(s.objects.values().filter(|o| o.kind == "green block").count(), 4);
        assert!(s.objects.contains_key("blue_block_3"));
    }

    #[test]
    fn overflow() {
        let table = Table { height: 0.0, workspace: Workspace { min: [0.0, 0.0], max: [0.15, 0.15] } };
        assert_eq!(
            gen_scene_on(&TaskSpec::Tower { height: 4 }, 1, table.clone()),
            Err(SceneGenError::PlacementOverflow { needed: 5, available: 4 })
        );
        assert!(gen_scene_on(&TaskSpec::Tower { height: 3 }, 1, table).is_ok());
    }
}
