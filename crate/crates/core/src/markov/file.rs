//! Profile file format.
//!
//! A single JSON document:
//!
//! ```json
//! {
//!   "version": 1,
//!   "meta": {"source": "web01", "timestamp": 1650000000, "threshold": 0.0001, "epsilon": 0.1, "seed": null},
//!   "states": [{"size": 4, "usage": "anon"}, {"size": 2, "usage": "free"}],
//!   "edges": [{"from": 0, "to": 1, "probability": 1.0}, {"from": 1, "to": 0, "probability": 1.0}]
//! }
//! ```
//!
//! Usage tags are `free`, `file`, `anon`, `anonhp` and `pinned`. Absent edges
//! are zero. Edges are written sorted by `(from, to)` and probabilities use
//! the shortest decimal form that parses back to the identical `f64`, so
//! output is byte-deterministic and round trips exactly.

use serde::{Deserialize, Serialize};

use crate::markov::{ClassUsage, MemoryClass, Profile, ProfileMeta};
use crate::{Error, Result};

pub const PROFILE_VERSION: u32 = 1;

/// Row sums further than this from 1 are rejected on load.
const LOAD_ROW_SUM_TOL: f64 = 1e-6;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileDoc {
    version: u32,
    meta: ProfileMeta,
    states: Vec<StateDoc>,
    edges: Vec<EdgeDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDoc {
    size: u32,
    usage: ClassUsage,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    from: usize,
    to: usize,
    probability: f64,
}

pub fn save_profile(profile: &Profile) -> Vec<u8> {
    let doc = ProfileDoc {
        version: PROFILE_VERSION,
        meta: profile.meta.clone(),
        states: profile
            .states()
            .iter()
            .map(|s| StateDoc {
                size: s.size,
                usage: s.usage,
            })
            .collect(),
        edges: profile
            .rows()
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter().map(move |&(j, p)| EdgeDoc {
                    from: i,
                    to: j,
                    probability: p,
                })
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("profile serialization is infallible");
    out.push(b'\n');
    out
}

pub fn load_profile(bytes: &[u8]) -> Result<Profile> {
    let doc: ProfileDoc =
        serde_json::from_slice(bytes).map_err(|e| Error::ProfileFile(e.to_string()))?;
    if doc.version != PROFILE_VERSION {
        return Err(Error::ProfileFile(format!(
            "unsupported version {}",
            doc.version
        )));
    }
    if doc.states.is_empty() {
        return Err(Error::ProfileFile("states list is empty".into()));
    }
    let n = doc.states.len();
    let states: Vec<MemoryClass> = doc
        .states
        .iter()
        .map(|s| MemoryClass::new(s.size, s.usage))
        .collect();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in &doc.edges {
        if e.from >= n || e.to >= n {
            return Err(Error::ProfileFile(format!(
                "edge {} -> {} references a missing state",
                e.from, e.to
            )));
        }
        if !(0.0..=1.0).contains(&e.probability) {
            return Err(Error::ProfileFile(format!(
                "edge {} -> {} has probability {}",
                e.from, e.to, e.probability
            )));
        }
        rows[e.from].push((e.to, e.probability));
    }
    for (i, row) in rows.iter_mut().enumerate() {
        let sum: f64 = row.iter().map(|&(_, p)| p).sum();
        if (sum - 1.0).abs() >= LOAD_ROW_SUM_TOL {
            return Err(Error::ProfileFile(format!("row {i} sums to {sum}")));
        }
        if (sum - 1.0).abs() > 1e-12 {
            row.iter_mut().for_each(|e| e.1 /= sum);
        }
    }
    Profile::new(states, rows, doc.meta).map_err(|e| Error::ProfileFile(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> Profile {
        let states = vec![
            MemoryClass::new(4, ClassUsage::Anon),
            MemoryClass::new(2, ClassUsage::Free),
        ];
        let meta = ProfileMeta {
            source: "t".into(),
            timestamp: Some(5),
            threshold: 1e-4,
            epsilon: 0.1,
            seed: None,
        };
        Profile::from_dense(states, &[vec![1.0 / 3.0, 2.0 / 3.0], vec![1.0, 0.0]], meta).unwrap()
    }

    #[test]
    fn round_trip_is_exact_and_deterministic() {
        let p = two_state();
        let bytes = save_profile(&p);
        let q = load_profile(&bytes).unwrap();
        assert_eq!(p, q);
        assert_eq!(bytes, save_profile(&q));
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.contains("\"anon\"") && text.contains("\"free\""));
    }

    fn doc(states: &str, edges: &str) -> Vec<u8> {
        format!(
            r#"{{"version":1,"meta":{{"source":"","timestamp":null,"threshold":0.0,"epsilon":0.1,"seed":null}},"states":{states},"edges":{edges}}}"#
        )
        .into_bytes()
    }

    #[test]
    fn rejects_bad_files() {
        let st = r#"[{"size":4,"usage":"anon"},{"size":2,"usage":"free"}]"#;
        let ok = doc(
            st,
            r#"[{"from":0,"to":1,"probability":1.0},{"from":1,"to":0,"probability":1.0}]"#,
        );
        assert!(load_profile(&ok).is_ok());

        let short = doc(
            st,
            r#"[{"from":0,"to":1,"probability":0.8},{"from":1,"to":0,"probability":1.0}]"#,
        );
        let err = load_profile(&short).unwrap_err().to_string();
        assert!(err.contains("row 0 sums to 0.8"), "{err}");

        assert!(load_profile(&doc("[]", "[]"))
            .unwrap_err()
            .to_string()
            .contains("empty"));

        let tag = doc(
            r#"[{"size":4,"usage":"slab"}]"#,
            r#"[{"from":0,"to":0,"probability":1.0}]"#,
        );
        assert!(matches!(load_profile(&tag), Err(Error::ProfileFile(_))));

        let dangling = doc(st, r#"[{"from":0,"to":7,"probability":1.0}]"#);
        assert!(load_profile(&dangling).is_err());
        assert!(load_profile(b"not json").is_err());
    }

    #[test]
    fn tolerates_small_row_error() {
        let st = r#"[{"size":4,"usage":"anon"},{"size":2,"usage":"free"}]"#;
        let near = doc(
            st,
            r#"[{"from":0,"to":1,"probability":0.9999999},{"from":1,"to":0,"probability":1.0}]"#,
        );
        let p = load_profile(&near).unwrap();
        assert_eq!(p.prob(0, 1), 1.0);
    }
}
