//! The football team composition problem: a club picks one of `|I|`
//! candidate team compositions at every node, may switch at most once per
//! transfer window within budget, and the chosen composition decides the
//! distribution of future team values.

mod formulation;
mod generate;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{from_json, Error, Result};
use crate::tree::{Mdst, MdstParts, TreeJson};

pub use formulation::{
    build_ftcp_milp, direct_objective, from_mspeu_bigm, scale_factors, solution_rows, to_mspeu, to_mspeu_bigm,
    write_solution_csv, FtcpFormulation, SolutionRow,
};
pub use generate::{generate_instance, GeneratorAudit, GeneratorParams};

pub const FORMAT: &str = "ftcp-mdst/1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscountMode {
    /// `1 / (1 + rho^t)`
    #[default]
    PaperLiteral,
    /// `(1 + rho)^-t`
    Compound,
}

impl DiscountMode {
    pub fn factor(self, rho: f64, t: usize) -> f64 {
        match self {
            DiscountMode::PaperLiteral => 1.0 / (1.0 + rho.powi(t as i32)),
            DiscountMode::Compound => (1.0 + rho).powi(-(t as i32)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FtcpInstance {
    pub compositions: Vec<String>,
    /// Non-leaf nodes carry one distribution per composition; leaves none.
    pub tree: Mdst,
    /// `value[n][i]`
    pub value: Vec<Vec<f64>>,
    /// `salary[n][i]`
    pub salary: Vec<Vec<f64>>,
    /// `transition[n][i][j]`, cost of moving from `i` to `j`.
    pub transition: Vec<Vec<Vec<f64>>>,
    pub budget: f64,
    pub extra_budget: Vec<f64>,
    pub rho: f64,
    pub discount_mode: DiscountMode,
    pub initial: usize,
    pub audit: Option<GeneratorAudit>,
}

impl FtcpInstance {
    pub fn num_compositions(&self) -> usize {
        self.compositions.len()
    }

    pub fn discount(&self, t: usize) -> f64 {
        self.discount_mode.factor(self.rho, t)
    }

    /// Checks the invariants and returns the first violation.
    pub fn validate(&self) -> Result<()> {
        let k = self.num_compositions();
        let tree = &self.tree;
        let nn = tree.num_nodes();
        if k == 0 {
            return Err(Error::schema("/compositions", "at least one composition is needed"));
        }
        if self.initial >= k {
            return Err(Error::schema("/initial", format!("composition {} does not exist", self.initial)));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::schema("/rho", "the discount rate must be finite and nonnegative"));
        }
        if !self.budget.is_finite() || self.budget < 0.0 {
            return Err(Error::schema("/budget", "the budget must be finite and nonnegative"));
        }
        for n in tree.nodes() {
            let nd = tree.num_distributions(n);
            if !tree.is_leaf(n) && nd != k {
                return Err(Error::invalid(format!("node {n} has {nd} distributions, expected one per composition ({k})")));
            }
            if tree.is_leaf(n) && tree.all_children(n).next().is_some() {
                return Err(Error::invalid(format!("leaf {n} has children")));
            }
        }
        let shape = |v: &Vec<Vec<f64>>, what: &str| -> Result<()> {
            if v.len() != nn || v.iter().any(|row| row.len() != k) {
                return Err(Error::invalid(format!("{what} needs one entry per composition and node")));
            }
            if let Some((n, i)) = find(v, |x| !x.is_finite()) {
                return Err(Error::invalid(format!("{what} of composition {i} at node {n} is not finite")));
            }
            Ok(())
        };
        shape(&self.value, "value")?;
        shape(&self.salary, "salary")?;
        if self.transition.len() != nn || self.transition.iter().any(|m| m.len() != k || m.iter().any(|r| r.len() != k)) {
            return Err(Error::invalid("transition costs need a |I| x |I| matrix per node"));
        }
        for (n, m) in self.transition.iter().enumerate() {
            for i in 0..k {
                if m[i][i] != 0.0 {
                    return Err(Error::schema(format!("/Ct/{i},{i},{n}"), "diagonal transition cost must be zero"));
                }
                if let Some(j) = m[i].iter().position(|c| !c.is_finite()) {
                    return Err(Error::invalid(format!("transition cost {i},{j} at node {n} is not finite")));
                }
            }
        }
        if self.extra_budget.len() != nn {
            return Err(Error::invalid("extra budget needs one entry per node"));
        }
        if self.extra_budget[0] != 0.0 {
            return Err(Error::schema("/extra_budget/0", "the root has no extra budget"));
        }
        if let Some(n) = self.extra_budget.iter().position(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::schema(format!("/extra_budget/{n}"), "extra budget must be finite and nonnegative"));
        }
        if let Some((n, i)) = find(&self.value, |x| x < 0.0) {
            log::warn!("composition {i} has negative value at node {n}; the fast big-M bound assumes nonnegative values");
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let k = self.num_compositions();
        let mut v = Vec::new();
        let mut cs = Vec::new();
        let mut ct = Vec::new();
        let mut extra = Vec::new();
        for n in 0..self.tree.num_nodes() {
            for i in 0..k {
                v.push((format!("{i},{n}"), self.value[n][i]));
                cs.push((format!("{i},{n}"), self.salary[n][i]));
                for j in 0..k {
                    if i != j {
                        ct.push((format!("{i},{j},{n}"), self.transition[n][i][j]));
                    }
                }
            }
            extra.push((n.to_string(), self.extra_budget[n]));
        }
        let doc = InstanceJson {
            format: FORMAT.to_string(),
            rho: self.rho,
            discount_mode: self.discount_mode,
            budget: self.budget,
            initial: self.initial,
            compositions: self.compositions.clone(),
            tree: TreeJson::from_tree(&self.tree),
            v: OrderedMap(v),
            cs: OrderedMap(cs),
            ct: OrderedMap(ct),
            extra_budget: OrderedMap(extra),
            generator_audit: self.audit.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<FtcpInstance> {
        let doc: InstanceJson = from_json(text)?;
        if doc.format != FORMAT {
            return Err(Error::schema("/format", format!("expected \"{FORMAT}\", found \"{}\"", doc.format)));
        }
        let tree = doc.tree.into_tree("/tree")?;
        let tree = drop_leaf_distributions(tree);
        let k = doc.compositions.len();
        let nn = tree.num_nodes();
        let key_err = |field: &str, key: &str, msg: &str| Error::schema(format!("/{field}/{key}"), msg.to_string());

        let per_comp = |field: &str, map: &OrderedMap| -> Result<Vec<Vec<f64>>> {
            let mut out = vec![vec![f64::NAN; k]; nn];
            for &(ref key, val) in &map.0 {
                let ids = parse_ids(key).ok_or_else(|| key_err(field, key, "expected a key \"i,n\""))?;
                let [i, n] = ids[..] else {
                    return Err(key_err(field, key, "expected a key \"i,n\""));
                };
                if i >= k || n >= nn {
                    return Err(key_err(field, key, "unknown composition or node"));
                }
                out[n][i] = val;
            }
            if let Some((n, i)) = find(&out, f64::is_nan) {
                return Err(Error::schema(format!("/{field}"), format!("missing entry for composition {i} at node {n}")));
            }
            Ok(out)
        };
        let value = per_comp("V", &doc.v)?;
        let salary = per_comp("Cs", &doc.cs)?;

        // per-node entries override stage-wide "i,j,@t" entries
        let mut transition = vec![vec![vec![f64::NAN; k]; k]; nn];
        let mut by_stage: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for &(ref key, val) in &doc.ct.0 {
            let parts: Vec<&str> = key.split(',').collect();
            let bad = || key_err("Ct", key, "expected a key \"i,j,n\" or \"i,j,@t\"");
            let [a, b, c] = parts[..] else {
                return Err(bad());
            };
            let (i, j) = (a.trim().parse::<usize>().map_err(|_| bad())?, b.trim().parse::<usize>().map_err(|_| bad())?);
            if i >= k || j >= k {
                return Err(key_err("Ct", key, "unknown composition"));
            }
            if i == j && val != 0.0 {
                return Err(key_err("Ct", key, "diagonal transition cost must be zero"));
            }
            if let Some(t) = c.trim().strip_prefix('@') {
                let t: usize = t.parse().map_err(|_| bad())?;
                if t == 0 || t > tree.num_stages() {
                    return Err(key_err("Ct", key, "unknown stage"));
                }
                by_stage.insert((i, j, t), val);
            } else {
                let n: usize = c.trim().parse().map_err(|_| bad())?;
                if n >= nn {
                    return Err(key_err("Ct", key, "unknown node"));
                }
                transition[n][i][j] = val;
            }
        }
        for n in tree.nodes() {
            let t = tree.stage(n);
            for i in 0..k {
                for j in 0..k {
                    let cell = &mut transition[n.idx()][i][j];
                    if cell.is_nan() {
                        *cell = if i == j {
                            0.0
                        } else {
                            *by_stage.get(&(i, j, t)).ok_or_else(|| {
                                Error::schema("/Ct", format!("missing transition cost {i},{j} at node {n}"))
                            })?
                        };
                    }
                }
            }
        }

        let mut extra_budget = vec![0.0; nn];
        for &(ref key, val) in &doc.extra_budget.0 {
            let n: usize = key.trim().parse().map_err(|_| key_err("extra_budget", key, "expected a node id"))?;
            if n >= nn {
                return Err(key_err("extra_budget", key, "unknown node"));
            }
            extra_budget[n] = val;
        }

        let inst = FtcpInstance {
            compositions: doc.compositions,
            tree,
            value,
            salary,
            transition,
            budget: doc.budget,
            extra_budget,
            rho: doc.rho,
            discount_mode: doc.discount_mode,
            initial: doc.initial,
            audit: doc.generator_audit,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn load(path: &Path) -> Result<FtcpInstance> {
        FtcpInstance::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

fn find(v: &[Vec<f64>], pred: impl Fn(f64) -> bool) -> Option<(usize, usize)> {
    v.iter().enumerate().find_map(|(n, row)| row.iter().position(|&x| pred(x)).map(|i| (n, i)))
}

fn parse_ids(key: &str) -> Option<Vec<usize>> {
    key.split(',').map(|s| s.trim().parse().ok()).collect()
}

/// Leaves may list empty distributions in a file; the instance keeps none.
fn drop_leaf_distributions(tree: Mdst) -> Mdst {
    let t = tree.num_stages();
    let mut parts: MdstParts = tree.into_parts();
    for (n, ch) in parts.children.iter_mut().enumerate() {
        if parts.stage[n] == t {
            ch.clear();
        }
    }
    Mdst::from_parts_unchecked(parts)
}

/// Adds one empty distribution per composition to every leaf, so that the
/// generic form has a choice row there too.
pub(crate) fn with_leaf_choices(tree: &Mdst, k: usize) -> Mdst {
    let mut parts = tree.parts().clone();
    for n in tree.leaves() {
        parts.children[n.idx()] = vec![Vec::new(); k];
    }
    Mdst::from_parts_unchecked(parts)
}

/// A JSON object written in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
struct OrderedMap(Vec<(String, f64)>);

impl Serialize for OrderedMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for OrderedMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = BTreeMap::<String, f64>::deserialize(d)?;
        Ok(OrderedMap(m.into_iter().collect()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceJson {
    format: String,
    rho: f64,
    #[serde(default)]
    discount_mode: DiscountMode,
    budget: f64,
    initial: usize,
    compositions: Vec<String>,
    tree: TreeJson,
    #[serde(rename = "V")]
    v: OrderedMap,
    #[serde(rename = "Cs")]
    cs: OrderedMap,
    #[serde(rename = "Ct")]
    ct: OrderedMap,
    #[serde(default)]
    extra_budget: OrderedMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator_audit: Option<GeneratorAudit>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "format": "ftcp-mdst/1", "rho": 0.0, "budget": 10.0, "initial": 0,
        "compositions": ["only"],
        "tree": {"nodes": [{"id": 0, "stage": 1, "parent": null, "prob": 1.0},
                           {"id": 1, "stage": 2, "parent": 0, "prob": 1.0}],
                 "children": {"0": {"0": [1]}}},
        "V": {"0,0": 100.0, "0,1": 110.0},
        "Cs": {"0,0": 5.0, "0,1": 5.0},
        "Ct": {}
    }"#;

    #[test]
    fn minimal_file_loads() {
        let inst = FtcpInstance::from_json(MINIMAL).unwrap();
        assert_eq!(inst.tree.num_nodes(), 2);
        assert_eq!(inst.extra_budget, vec![0.0, 0.0]);
        let again = FtcpInstance::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(again, inst);
    }

    #[test]
    fn nonzero_diagonal_is_rejected() {
        let text = MINIMAL.replace(r#""Ct": {}"#, r#""Ct": {"0,0,1": 5.0}"#);
        let err = FtcpInstance::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("diagonal transition cost must be zero"), "{err}");
    }

    #[test]
    fn schema_errors_carry_a_pointer() {
        let text = MINIMAL.replace(r#""budget": 10.0"#, r#""budget": "ten""#);
        match FtcpInstance::from_json(&text).unwrap_err() {
            Error::Schema { pointer, .. } => assert_eq!(pointer, "/budget"),
            e => panic!("{e}"),
        }
        let text = MINIMAL.replace(r#""0,1": 110.0"#, r#""0,7": 110.0"#);
        match FtcpInstance::from_json(&text).unwrap_err() {
            Error::Schema { pointer, .. } => assert_eq!(pointer, "/V/0,7"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn stage_shorthand_fills_transition_costs() {
        let text = r#"{
            "format": "ftcp-mdst/1", "rho": 0.0, "budget": 10.0, "initial": 0,
            "compositions": ["a", "b"],
            "tree": {"nodes": [{"id": 0, "stage": 1, "parent": null, "prob": 1.0},
                               {"id": 1, "stage": 2, "parent": 0, "prob": 1.0},
                               {"id": 2, "stage": 2, "parent": 0, "prob": 1.0}],
                     "children": {"0": {"0": [1], "1": [2]}}},
            "V": {"0,0": 1, "1,0": 1, "0,1": 1, "1,1": 1, "0,2": 1, "1,2": 1},
            "Cs": {"0,0": 0, "1,0": 0, "0,1": 0, "1,1": 0, "0,2": 0, "1,2": 0},
            "Ct": {"0,1,@1": 3, "1,0,@1": -1, "0,1,@2": 4, "1,0,@2": 2, "1,0,2": 9}
        }"#;
        let inst = FtcpInstance::from_json(text).unwrap();
        assert_eq!(inst.transition[0][0][1], 3.0);
        assert_eq!(inst.transition[1][1][0], 2.0);
        assert_eq!(inst.transition[2][1][0], 9.0);
    }

    #[test]
    fn discount_modes() {
        assert_eq!(DiscountMode::PaperLiteral.factor(0.0, 3), 1.0);
        assert!((DiscountMode::PaperLiteral.factor(0.1, 4) - 1.0 / 1.0001).abs() < 1e-15);
        assert!((DiscountMode::Compound.factor(0.1, 2) - 1.0 / 1.21).abs() < 1e-15);
    }
}
