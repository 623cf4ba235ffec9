//! Lesion-class system: raw annotation labels, the evaluation classes
//! they are grouped into, and the set of classes whose ground-truth
//! voxels are excluded from multiclass scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, LabelVolume};

/// Annotated tissue types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RawClass {
    Background,
    HealthyLung,
    Ggo,
    Consolidation,
    Cpp,
    LinearOpacity,
    Rhs,
    Combined,
    Oat,
}

impl RawClass {
    pub const ALL: [RawClass; 9] = [
        RawClass::Background,
        RawClass::HealthyLung,
        RawClass::Ggo,
        RawClass::Consolidation,
        RawClass::Cpp,
        RawClass::LinearOpacity,
        RawClass::Rhs,
        RawClass::Combined,
        RawClass::Oat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RawClass::Background => "BACKGROUND",
            RawClass::HealthyLung => "HEALTHY_LUNG",
            RawClass::Ggo => "GGO",
            RawClass::Consolidation => "CONSOLIDATION",
            RawClass::Cpp => "CPP",
            RawClass::LinearOpacity => "LINEAR_OPACITY",
            RawClass::Rhs => "RHS",
            RawClass::Combined => "COMBINED",
            RawClass::Oat => "OAT",
        }
    }

    /// Built-in label encoding.
    pub fn default_id(self) -> u8 {
        match self {
            RawClass::Background => 0,
            RawClass::HealthyLung => 1,
            RawClass::Ggo => 2,
            RawClass::Consolidation => 3,
            RawClass::Cpp => 4,
            RawClass::LinearOpacity => 5,
            RawClass::Rhs => 6,
            RawClass::Combined => 7,
            RawClass::Oat => 8,
        }
    }

    pub fn is_lesion(self) -> bool {
        !matches!(self, RawClass::Background | RawClass::HealthyLung)
    }
}

impl FromStr for RawClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RawClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidTaxonomy(format!("unknown raw class {s:?}")))
    }
}

/// Classes that metrics are reported for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EvalClass {
    #[serde(rename = "LUNG")]
    Lung,
    #[serde(rename = "BIN")]
    Bin,
    #[serde(rename = "CON")]
    Con,
    #[serde(rename = "CPP")]
    Cpp,
    #[serde(rename = "GGO")]
    Ggo,
    #[serde(rename = "COM")]
    Com,
    #[serde(rename = "OAT")]
    Oat,
    #[serde(rename = "MEAN")]
    Mean,
    #[serde(rename = "GGO+CPP")]
    GgoPlusCpp,
}

impl EvalClass {
    /// The three multiclass targets.
    pub const TARGETS: [EvalClass; 3] = [EvalClass::Con, EvalClass::Cpp, EvalClass::Ggo];
    /// The five disjoint lesion groups whose union is `Bin`.
    pub const LESION_GROUPS: [EvalClass; 5] = [
        EvalClass::Con,
        EvalClass::Cpp,
        EvalClass::Ggo,
        EvalClass::Com,
        EvalClass::Oat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EvalClass::Lung => "LUNG",
            EvalClass::Bin => "BIN",
            EvalClass::Con => "CON",
            EvalClass::Cpp => "CPP",
            EvalClass::Ggo => "GGO",
            EvalClass::Com => "COM",
            EvalClass::Oat => "OAT",
            EvalClass::Mean => "MEAN",
            EvalClass::GgoPlusCpp => "GGO+CPP",
        }
    }

    /// Raw classes grouped into this evaluation class. `Mean` is an
    /// aggregation marker and has none.
    pub fn members(self) -> &'static [RawClass] {
        use RawClass::*;
        match self {
            EvalClass::Lung => &[HealthyLung, Ggo, Consolidation, Cpp, LinearOpacity, Rhs, Combined, Oat],
            EvalClass::Bin => &[Ggo, Consolidation, Cpp, LinearOpacity, Rhs, Combined, Oat],
            EvalClass::Con => &[Consolidation, LinearOpacity],
            EvalClass::Cpp => &[Cpp],
            EvalClass::Ggo => &[Ggo],
            EvalClass::Com => &[Combined, Rhs],
            EvalClass::Oat => &[Oat],
            EvalClass::Mean => &[],
            EvalClass::GgoPlusCpp => &[Ggo, Cpp],
        }
    }

    pub fn contains(self, raw: RawClass) -> bool {
        self.members().contains(&raw)
    }
}

impl fmt::Display for EvalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EvalClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            EvalClass::Lung,
            EvalClass::Bin,
            EvalClass::Con,
            EvalClass::Cpp,
            EvalClass::Ggo,
            EvalClass::Com,
            EvalClass::Oat,
            EvalClass::Mean,
            EvalClass::GgoPlusCpp,
        ];
        all.into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("GGO_PLUS_CPP") && *c == EvalClass::GgoPlusCpp))
            .ok_or_else(|| Error::InvalidTaxonomy(format!("unknown evaluation class {s:?}")))
    }
}

/// Benchmark task; each has its own label alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Lung,
    Bin,
    #[serde(rename = "mc", alias = "multiclass")]
    Multiclass,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Lung, Task::Bin, Task::Multiclass];

    pub fn name(self) -> &'static str {
        match self {
            Task::Lung => "lung",
            Task::Bin => "bin",
            Task::Multiclass => "mc",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lung" => Ok(Task::Lung),
            "bin" => Ok(Task::Bin),
            "mc" | "multiclass" => Ok(Task::Multiclass),
            _ => Err(Error::InvalidArgument(format!("unknown task {s:?}"))),
        }
    }
}

/// On-disk taxonomy description.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TaxonomyFile {
    #[serde(default)]
    pub raw: BTreeMap<String, u8>,
    #[serde(default)]
    pub ignore: Option<Vec<String>>,
}

/// Mapping from stored label values to raw classes, plus the ignore set.
#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    lookup: [Option<RawClass>; 256],
    ids: BTreeMap<RawClass, u8>,
    ignore: BTreeSet<EvalClass>,
}

impl Default for Taxonomy {
    fn default() -> Self {
        let ids = RawClass::ALL.iter().map(|&c| (c, c.default_id())).collect();
        Self::build(ids, [EvalClass::Com].into_iter().collect()).expect("built-in taxonomy is valid")
    }
}

impl Taxonomy {
    fn build(ids: BTreeMap<RawClass, u8>, ignore: BTreeSet<EvalClass>) -> Result<Self> {
        let mut lookup = [None; 256];
        for (&class, &id) in &ids {
            if let Some(prev) = lookup[id as usize] {
                return Err(Error::InvalidTaxonomy(format!(
                    "label {id} assigned to both {} and {}",
                    RawClass::name(prev),
                    class.name()
                )));
            }
            lookup[id as usize] = Some(class);
        }
        match ids.get(&RawClass::Background) {
            Some(0) => {}
            other => {
                return Err(Error::InvalidTaxonomy(format!(
                    "BACKGROUND must be label 0, got {other:?}"
                )))
            }
        }
        for c in &ignore {
            if *c == EvalClass::Mean {
                return Err(Error::InvalidTaxonomy("MEAN cannot be ignored".into()));
            }
        }
        Ok(Taxonomy { lookup, ids, ignore })
    }

    /// Starts from the built-in encoding and applies any remapping and
    /// ignore set from the file.
    pub fn from_file_spec(spec: &TaxonomyFile) -> Result<Self> {
        let mut ids: BTreeMap<RawClass, u8> = RawClass::ALL.iter().map(|&c| (c, c.default_id())).collect();
        if !spec.raw.is_empty() {
            ids.clear();
            ids.insert(RawClass::Background, 0);
            for (name, &id) in &spec.raw {
                ids.insert(name.parse()?, id);
            }
        }
        let ignore = match &spec.ignore {
            Some(list) => list.iter().map(|s| s.parse()).collect::<Result<_>>()?,
            None => [EvalClass::Com].into_iter().collect(),
        };
        Self::build(ids, ignore)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: TaxonomyFile = serde_json::from_str(text)?;
        Self::from_file_spec(&spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn with_ignore(mut self, ignore: impl IntoIterator<Item = EvalClass>) -> Result<Self> {
        let ignore = ignore.into_iter().collect();
        self = Self::build(self.ids, ignore)?;
        Ok(self)
    }

    pub fn ignore_set(&self) -> &BTreeSet<EvalClass> {
        &self.ignore
    }

    pub fn id_of(&self, class: RawClass) -> Option<u8> {
        self.ids.get(&class).copied()
    }

    pub fn class_of(&self, label: u8) -> Result<RawClass> {
        self.lookup[label as usize].ok_or(Error::UnknownLabel(label))
    }

    /// Checks every label in `vol` is known.
    pub fn validate(&self, vol: &LabelVolume) -> Result<()> {
        let mut seen = [false; 256];
        for &l in vol.data() {
            seen[l as usize] = true;
        }
        for (l, &s) in seen.iter().enumerate() {
            if s && self.lookup[l].is_none() {
                return Err(Error::UnknownLabel(l as u8));
            }
        }
        Ok(())
    }

    fn label_table(&self, pred: impl Fn(RawClass) -> bool) -> [Option<bool>; 256] {
        let mut t = [None; 256];
        for (l, c) in self.lookup.iter().enumerate() {
            if let Some(c) = c {
                t[l] = Some(pred(*c));
            }
        }
        t
    }

    fn apply_table(&self, raw: &LabelVolume, table: &[Option<bool>; 256]) -> Result<BinaryMask> {
        let mut out = Vec::with_capacity(raw.len());
        for &l in raw.data() {
            out.push(table[l as usize].ok_or(Error::UnknownLabel(l))?);
        }
        raw.with_data(out)
    }

    /// Foreground where the voxel's raw class belongs to `cls`.
    pub fn project(&self, raw: &LabelVolume, cls: EvalClass) -> Result<BinaryMask> {
        let table = self.label_table(|c| cls.contains(c));
        self.apply_table(raw, &table)
    }

    /// Ground-truth voxels whose evaluation class is in the ignore set.
    pub fn ignore_mask(&self, gt: &LabelVolume) -> Result<BinaryMask> {
        let table = self.label_table(|c| self.ignore.iter().any(|e| e.contains(c)));
        self.apply_table(gt, &table)
    }

    /// Maps `vol` onto the task's label alphabet so predictions from
    /// different methods can be voted on: every raw class is replaced by
    /// the first encoded raw class of its evaluation group.
    pub fn canonicalize(&self, vol: &LabelVolume, task: Task) -> Result<LabelVolume> {
        let mut table = [None::<u8>; 256];
        for (l, c) in self.lookup.iter().enumerate() {
            let Some(c) = *c else { continue };
            let group = match task {
                Task::Lung => EvalClass::Lung.contains(c).then_some(EvalClass::Lung),
                Task::Bin => EvalClass::Bin.contains(c).then_some(EvalClass::Bin),
                Task::Multiclass => EvalClass::LESION_GROUPS.into_iter().find(|g| g.contains(c)),
            };
            table[l] = Some(match group {
                None => 0,
                Some(g) => g.members().iter().find_map(|m| self.id_of(*m)).unwrap_or(0),
            });
        }
        let mut out = Vec::with_capacity(vol.len());
        for &l in vol.data() {
            out.push(table[l as usize].ok_or(Error::UnknownLabel(l))?);
        }
        vol.with_data(out)
    }
}
