//! Physical parameter files: per-element values or group values plus a
//! group map, for both masses and compliances.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{from_json_str, read_to_string, to_json_pretty, Metadata};
use crate::error::Result;
use crate::sysid::{GroupedParam, PhysParams};

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ParamJson {
    PerElement { per_element: Vec<f64> },
    Grouped {
        group_values: Vec<f64>,
        group_map: Vec<usize>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<Metadata>,
    masses: ParamJson,
    compliances: ParamJson,
}

fn to_json(p: &GroupedParam) -> ParamJson {
    let identity = p.groups.iter().enumerate().all(|(i, &g)| i == g)
        && p.groups.len() == p.log_values.len();
    if identity {
        ParamJson::PerElement {
            per_element: p.materialize(),
        }
    } else {
        ParamJson::Grouped {
            group_values: p.group_values(),
            group_map: p.groups.clone(),
        }
    }
}

fn from_json(j: ParamJson) -> Result<GroupedParam> {
    match j {
        ParamJson::PerElement { per_element } => GroupedParam::per_element(&per_element),
        ParamJson::Grouped {
            group_values,
            group_map,
        } => GroupedParam::grouped(&group_values, group_map),
    }
}

pub fn write_params(path: &Path, params: &PhysParams, metadata: Option<Metadata>) -> Result<()> {
    let file = ParamsFile {
        metadata,
        masses: to_json(&params.mass),
        compliances: to_json(&params.compliance),
    };
    to_json_pretty(path, &file)
}

pub fn read_params(path: &Path) -> Result<PhysParams> {
    let text = read_to_string(path)?;
    let file: ParamsFile = from_json_str(path, &text)?;
    Ok(PhysParams {
        mass: from_json(file.masses)?,
        compliance: from_json(file.compliances)?,
    })
}
