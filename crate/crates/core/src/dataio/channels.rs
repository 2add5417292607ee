use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::run::TimeSeriesRun;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Thermal,
    Smoke,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Thermal => "thermal",
            ModelKind::Smoke => "smoke",
        })
    }
}

/// A named signal of a run. Node indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Channel {
    Hrr,
    Ambient,
    Temperature(usize),
    Smoke(usize),
}

impl Channel {
    /// Temperature-valued channels, referenced to ambient during identification.
    pub fn is_temperature(&self) -> bool {
        matches!(self, Channel::Temperature(_) | Channel::Ambient)
    }

    pub fn values<'a>(&self, run: &'a TimeSeriesRun) -> Result<&'a [f64]> {
        let n = run.node_count();
        let node = |i: usize| {
            if i == 0 || i > n {
                Err(Error::InvalidArgument(format!(
                    "channel {self} not in a run with {n} nodes"
                )))
            } else {
                Ok(i - 1)
            }
        };
        Ok(match *self {
            Channel::Hrr => &run.hrr,
            Channel::Ambient => &run.ambient,
            Channel::Temperature(i) => &run.temperature[node(i)?],
            Channel::Smoke(i) => &run.smoke[node(i)?],
        })
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Hrr => f.write_str("Q"),
            Channel::Ambient => f.write_str("T_amb"),
            Channel::Temperature(i) => write!(f, "T_{i}"),
            Channel::Smoke(i) => write!(f, "S_{i}"),
        }
    }
}

impl FromStr for Channel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Q" => return Ok(Channel::Hrr),
            "T_amb" => return Ok(Channel::Ambient),
            _ => {}
        }
        let bad = || Error::InvalidArgument(format!("unknown channel name {s:?}"));
        let (ctor, rest): (fn(usize) -> Channel, &str) = if let Some(r) = s.strip_prefix("T_") {
            (Channel::Temperature, r)
        } else if let Some(r) = s.strip_prefix("S_") {
            (Channel::Smoke, r)
        } else {
            return Err(bad());
        };
        let i: usize = rest.parse().map_err(|_| bad())?;
        if i == 0 {
            return Err(bad());
        }
        Ok(ctor(i))
    }
}

impl TryFrom<String> for Channel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Channel> for String {
    fn from(c: Channel) -> String {
        c.to_string()
    }
}

/// Inputs and output of one node model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeChannelSpec {
    pub node: usize,
    pub kind: ModelKind,
    pub fire_node: bool,
    pub inputs: Vec<Channel>,
    pub output: Channel,
}

impl NodeChannelSpec {
    /// Standard wiring:
    ///
    /// | kind    | fire node        | other nodes              |
    /// |---------|------------------|--------------------------|
    /// | thermal | `Q, T_amb`       | `T_{i-1}, T_amb`         |
    /// | smoke   | `Q, T_i, T_amb`  | `S_{i-1}, T_i, T_amb`    |
    pub fn new(node: usize, kind: ModelKind, fire_node: bool) -> Result<Self> {
        if node == 0 {
            return Err(Error::InvalidArgument("node indices are 1-based".into()));
        }
        if !fire_node && node == 1 {
            return Err(Error::InvalidArgument(
                "node 1 has no upstream neighbour and must be a fire node".into(),
            ));
        }
        let driver = if fire_node {
            Channel::Hrr
        } else {
            match kind {
                ModelKind::Thermal => Channel::Temperature(node - 1),
                ModelKind::Smoke => Channel::Smoke(node - 1),
            }
        };
        let (inputs, output) = match kind {
            ModelKind::Thermal => (vec![driver, Channel::Ambient], Channel::Temperature(node)),
            ModelKind::Smoke => (
                vec![driver, Channel::Temperature(node), Channel::Ambient],
                Channel::Smoke(node),
            ),
        };
        Ok(Self {
            node,
            kind,
            fire_node,
            inputs,
            output,
        })
    }

    /// Index of the cascade-internal input (upstream output), if any.
    pub fn upstream_input(&self) -> Option<usize> {
        if self.fire_node {
            return None;
        }
        let up = match self.kind {
            ModelKind::Thermal => Channel::Temperature(self.node - 1),
            ModelKind::Smoke => Channel::Smoke(self.node - 1),
        };
        self.inputs.iter().position(|c| *c == up)
    }

    /// Whether input `j` is internal to the cascade: the upstream output or,
    /// for smoke nodes, the temperature signal of the same node.
    pub fn is_internal_input(&self, j: usize) -> bool {
        matches!(self.inputs.get(j), Some(Channel::Temperature(_) | Channel::Smoke(_)))
    }
}

/// Nodes carrying temperature and smoke sensors (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorLayout {
    nodes: BTreeSet<usize>,
    node_count: usize,
}

impl SensorLayout {
    pub fn new(nodes: impl IntoIterator<Item = usize>, node_count: usize) -> Result<Self> {
        let nodes: BTreeSet<usize> = nodes.into_iter().collect();
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("sensor layout is empty".into()));
        }
        if let Some(bad) = nodes.iter().find(|&&i| i == 0 || i > node_count) {
            return Err(Error::InvalidArgument(format!(
                "sensor node {bad} outside 1..={node_count}"
            )));
        }
        Ok(Self { nodes, node_count })
    }

    /// Sensors at every node.
    pub fn full(node_count: usize) -> Self {
        Self {
            nodes: (1..=node_count).collect(),
            node_count,
        }
    }

    /// No sensors at all. Only useful for checking that the estimator refuses
    /// an unobservable layout.
    pub fn empty(node_count: usize) -> Self {
        Self {
            nodes: BTreeSet::new(),
            node_count,
        }
    }

    /// Parse `"1,5,10"`.
    pub fn parse(list: &str, node_count: usize) -> Result<Self> {
        let nodes = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("bad sensor index {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(nodes, node_count)
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn contains(&self, node: usize) -> bool {
        self.nodes.contains(&node)
    }
}

impl fmt::Display for SensorLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v: Vec<String> = self.nodes.iter().map(|n| n.to_string()).collect();
        f.write_str(&v.join(","))
    }
}

/// Input matrix (T x m, columns in spec order) and output vector of one node.
#[derive(Debug, Clone)]
pub struct NodeIo {
    pub u: DMatrix<f64>,
    pub y: DVector<f64>,
}

pub fn extract_node_io(run: &TimeSeriesRun, spec: &NodeChannelSpec) -> Result<NodeIo> {
    if !spec.fire_node && spec.node == 1 {
        return Err(Error::InvalidArgument("node 1 cannot be a non-fire node".into()));
    }
    let t = run.len();
    let columns = spec.inputs.iter().map(|c| c.values(run)).collect::<Result<Vec<_>>>()?;
    let u = DMatrix::from_fn(t, columns.len(), |r, c| columns[c][r]);
    let y = DVector::from_column_slice(spec.output.values(run)?);
    Ok(NodeIo { u, y })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run() -> TimeSeriesRun {
        let mut r = TimeSeriesRun::with_capacity(10, 5);
        for k in 0..5 {
            let temps: Vec<f64> = (1..=10).map(|i| 100.0 * i as f64 + k as f64).collect();
            let smoke: Vec<f64> = (1..=10).map(|i| -(i as f64) - k as f64 * 0.01).collect();
            r.push_sample(k as f64, 1000.0 + k as f64, 25.0, &temps, &smoke);
        }
        r
    }

    #[test]
    fn fire_thermal_wiring() {
        let spec = NodeChannelSpec::new(1, ModelKind::Thermal, true).unwrap();
        assert_eq!(spec.inputs, vec![Channel::Hrr, Channel::Ambient]);
        let io = extract_node_io(&run(), &spec).unwrap();
        assert_eq!(io.u[(2, 0)], 1002.0);
        assert_eq!(io.u[(2, 1)], 25.0);
        assert_eq!(io.y[3], 103.0);
    }

    #[test]
    fn non_fire_smoke_wiring() {
        let spec = NodeChannelSpec::new(5, ModelKind::Smoke, false).unwrap();
        let names: Vec<String> = spec.inputs.iter().map(|c| c.to_string()).collect();
        assert_eq!(names, ["S_4", "T_5", "T_amb"]);
        assert_eq!(spec.upstream_input(), Some(0));
        let r = run();
        let io = extract_node_io(&r, &spec).unwrap();
        for k in 0..r.len() {
            assert_eq!(io.u[(k, 0)], r.smoke[3][k]);
            assert_eq!(io.u[(k, 1)], r.temperature[4][k]);
            assert_eq!(io.u[(k, 2)], r.ambient[k]);
            assert_eq!(io.y[k], r.smoke[4][k]);
        }
    }

    #[test]
    fn node_one_must_be_fire() {
        assert!(NodeChannelSpec::new(1, ModelKind::Thermal, false).is_err());
        let forged = NodeChannelSpec {
            node: 1,
            kind: ModelKind::Thermal,
            fire_node: false,
            inputs: vec![Channel::Ambient],
            output: Channel::Temperature(1),
        };
        assert!(extract_node_io(&run(), &forged).is_err());
    }

    #[test]
    fn channel_names_round_trip() {
        for c in [
            Channel::Hrr,
            Channel::Ambient,
            Channel::Temperature(7),
            Channel::Smoke(10),
        ] {
            assert_eq!(c.to_string().parse::<Channel>().unwrap(), c);
        }
        assert!("X_1".parse::<Channel>().is_err());
        assert!("T_0".parse::<Channel>().is_err());
    }

    #[test]
    fn layouts() {
        let l = SensorLayout::parse("10,1,5", 10).unwrap();
        assert_eq!(l.nodes().collect::<Vec<_>>(), vec![1, 5, 10]);
        assert_eq!(l.to_string(), "1,5,10");
        assert!(SensorLayout::parse("1,11", 10).is_err());
        assert!(SensorLayout::parse("", 10).is_err());
    }
}
