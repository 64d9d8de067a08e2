//! Model checkpoint file: a JSON document holding one or more networks
//! (layer sizes, head, flat parameters) and a string-keyed provenance record.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Mlp;
use crate::data::io::write_atomic;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    /// What the networks are, e.g. `reward`, `reward-ensemble`, `policy`, `critic`.
    pub kind: String,
    pub networks: Vec<Mlp>,
    pub provenance: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        write_atomic(path, s.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        // Re-validate shapes and finiteness.
        let networks = ck
            .networks
            .into_iter()
            .map(|n| Mlp::from_parts(n.sizes().to_vec(), n.head(), n.params().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Checkpoint { networks, ..ck })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Head;

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = Checkpoint {
            kind: "reward".into(),
            networks: vec![
                Mlp::new(&[7, 5, 1], Head::Logistic, 3).unwrap(),
                Mlp::new(&[7, 5, 5], Head::Softmax, 4).unwrap(),
            ],
            provenance: BTreeMap::from([("strategy".to_string(), "tgr".to_string())]),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn corrupted_parameter_count_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(
            &path,
            r#"{"kind":"reward","networks":[{"sizes":[2,1],"head":"logistic","params":[0.0]}],"provenance":{}}"#,
        )
        .unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
