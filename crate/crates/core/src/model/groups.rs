use std::fmt;
use std::str::FromStr;

use super::ModelSpec;
use crate::error::{Error, Result};

/// Depth stratum of parametric layers. Ordered `Early < Mid < Late < All`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupName {
    Early,
    Mid,
    Late,
    All,
}

impl GroupName {
    pub const ALL: [GroupName; 4] = [GroupName::Early, GroupName::Mid, GroupName::Late, GroupName::All];
}

impl fmt::Display for GroupName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupName::Early => "early",
            GroupName::Mid => "mid",
            GroupName::Late => "late",
            GroupName::All => "all",
        })
    }
}

impl FromStr for GroupName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "early" => Ok(GroupName::Early),
            "mid" => Ok(GroupName::Mid),
            "late" => Ok(GroupName::Late),
            "all" => Ok(GroupName::All),
            _ => Err(Error::invalid(format!("unknown layer group `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerGroup {
    pub name: GroupName,
    pub layers: Vec<String>,
}

/// Splits the parametric layers into depth thirds. With `n = 3q + r`
/// parametric layers, Early gets `q`, Mid `q + (r == 2)`, Late `q + (r >= 1)`;
/// All is the union.
pub fn layer_groups(spec: &ModelSpec) -> Result<Vec<LayerGroup>> {
    let ids: Vec<String> = spec
        .parametric_indices()
        .into_iter()
        .map(|i| spec.layers()[i].id.clone())
        .collect();
    let n = ids.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "layer groups need at least 3 parametric layers, model has {n}"
        )));
    }
    let (q, r) = (n / 3, n % 3);
    let early = q;
    let mid = q + usize::from(r == 2);
    Ok(vec![
        LayerGroup {
            name: GroupName::Early,
            layers: ids[..early].to_vec(),
        },
        LayerGroup {
            name: GroupName::Mid,
            layers: ids[early..early + mid].to_vec(),
        },
        LayerGroup {
            name: GroupName::Late,
            layers: ids[early + mid..].to_vec(),
        },
        LayerGroup {
            name: GroupName::All,
            layers: ids,
        },
    ])
}
