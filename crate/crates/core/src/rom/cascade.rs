use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::dataio::{Channel, ModelKind, SensorLayout};
use crate::sysid::{matrix, rows, CompactModelRecord, IdentificationConfig, ModelFile, NodeModel, StateSpace};
use crate::{Error, Real, Result};

/// Options for [`assemble_cascade`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssemblyOptions {
    /// Accept feedthrough on the upstream channel and fold it into the
    /// downstream rows by recursive substitution.
    pub substitute_feedthrough: bool,
}

/// Tunnel-wide state-space model of one chain (thermal or smoke).
///
/// The state stacks the node states in node order. `c_full`/`d_full` map
/// state and exogenous input to every node's output; `c`/`d` keep only the
/// sensor rows of `layout`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactModel<T: Real> {
    pub kind: ModelKind,
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c_full: DMatrix<T>,
    pub d_full: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    /// Exogenous input channels, in column order of `b`.
    pub inputs: Vec<Channel>,
    /// First state index of each node.
    pub offsets: Vec<usize>,
    pub orders: Vec<usize>,
    pub layout: SensorLayout,
    pub dt: T,
}

/// Exogenous inputs of a chain: `[Q, T_amb]` for thermal,
/// `[Q, T_1..T_N, T_amb]` for smoke.
pub fn chain_inputs(kind: ModelKind, node_count: usize) -> Vec<Channel> {
    let mut v = vec![Channel::Hrr];
    if kind == ModelKind::Smoke {
        v.extend((1..=node_count).map(Channel::Temperature));
    }
    v.push(Channel::Ambient);
    v
}

fn upstream_channel(kind: ModelKind, node: usize) -> Channel {
    match kind {
        ModelKind::Thermal => Channel::Temperature(node - 1),
        ModelKind::Smoke => Channel::Smoke(node - 1),
    }
}

/// Chain node models into one compact model by substituting each upstream
/// output into its downstream neighbour's input.
///
/// `nodes` must hold nodes `1..=N` of one kind, in order.
pub fn assemble_cascade<T: Real>(
    nodes: &[NodeModel<T>],
    layout: &SensorLayout,
    opts: &AssemblyOptions,
) -> Result<CompactModel<T>> {
    let Some(first) = nodes.first() else {
        return Err(Error::Assembly("no node models to assemble".into()));
    };
    let kind = first.kind();
    let n_nodes = nodes.len();
    if layout.node_count() != n_nodes {
        return Err(Error::Assembly(format!(
            "layout is for {} nodes, chain has {n_nodes}",
            layout.node_count()
        )));
    }
    let dt = first.model.dt;
    for (i, m) in nodes.iter().enumerate() {
        if m.kind() != kind {
            return Err(Error::Assembly(format!(
                "node {} is {}, chain is {kind}",
                m.node(),
                m.kind()
            )));
        }
        if m.node() != i + 1 {
            return Err(Error::Assembly(format!(
                "chain position {} holds node {}; nodes must be 1..={n_nodes} in order",
                i + 1,
                m.node()
            )));
        }
    }

    let inputs = chain_inputs(kind, n_nodes);
    let orders: Vec<usize> = nodes.iter().map(|m| m.order()).collect();
    let mut offsets = Vec::with_capacity(n_nodes);
    let mut total = 0;
    for o in &orders {
        offsets.push(total);
        total += o;
    }
    let m_exo = inputs.len();
    let mut a = DMatrix::<T>::zeros(total, total);
    let mut b = DMatrix::<T>::zeros(total, m_exo);
    let mut c_full = DMatrix::<T>::zeros(n_nodes, total);
    let mut d_full = DMatrix::<T>::zeros(n_nodes, m_exo);

    for (i, node) in nodes.iter().enumerate() {
        let ss = &node.model;
        let (off, ord) = (offsets[i], orders[i]);
        a.view_mut((off, off), (ord, ord)).copy_from(&ss.a);
        for j in 1..=ord {
            c_full[(i, off + j - 1)] = ss.c[(0, j - 1)];
        }
        for (j, ch) in node.spec.inputs.iter().enumerate() {
            let bj = ss.b.column(j);
            let dj = ss.d[(0, j)];
            if let Some(col) = inputs.iter().position(|c| c == ch) {
                for r in 0..ord {
                    b[(off + r, col)] += bj[r];
                }
                d_full[(i, col)] += dj;
                continue;
            }
            if node.spec.fire_node || *ch != upstream_channel(kind, node.node()) {
                return Err(Error::Assembly(format!(
                    "node {} {kind}: input {ch} is neither exogenous nor the upstream output",
                    node.node()
                )));
            }
            if dj != T::zero() && !opts.substitute_feedthrough {
                return Err(Error::Assembly(format!(
                    "node {} {kind}: feedthrough {dj:e} on upstream channel {ch}; \
                     enable feedthrough substitution to assemble",
                    node.node()
                )));
            }
            // upstream output y_{i-1} = c_full[i-1] z + d_full[i-1] u
            let up_c = c_full.row(i - 1).into_owned();
            let up_d = d_full.row(i - 1).into_owned();
            for r in 0..ord {
                for s in 0..total {
                    a[(off + r, s)] += bj[r] * up_c[s];
                }
                for s in 0..m_exo {
                    b[(off + r, s)] += bj[r] * up_d[s];
                }
            }
            for s in 0..total {
                c_full[(i, s)] += dj * up_c[s];
            }
            for s in 0..m_exo {
                d_full[(i, s)] += dj * up_d[s];
            }
        }
    }
    let (c, d) = select_rows(&c_full, &d_full, layout);
    Ok(CompactModel {
        kind,
        a,
        b,
        c_full,
        d_full,
        c,
        d,
        inputs,
        offsets,
        orders,
        layout: layout.clone(),
        dt,
    })
}

fn select_rows<T: Real>(c_full: &DMatrix<T>, d_full: &DMatrix<T>, layout: &SensorLayout) -> (DMatrix<T>, DMatrix<T>) {
    let rows: Vec<usize> = layout.nodes().map(|n| n - 1).collect();
    (c_full.select_rows(rows.iter()), d_full.select_rows(rows.iter()))
}

impl<T: Real> CompactModel<T> {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn node_count(&self) -> usize {
        self.c_full.nrows()
    }

    /// Same chain read out at a different set of sensors.
    pub fn with_layout(&self, layout: &SensorLayout) -> Result<Self> {
        if layout.node_count() != self.node_count() {
            return Err(Error::Assembly(format!(
                "layout is for {} nodes, chain has {}",
                layout.node_count(),
                self.node_count()
            )));
        }
        let (c, d) = select_rows(&self.c_full, &self.d_full, layout);
        Ok(Self {
            c,
            d,
            layout: layout.clone(),
            ..self.clone()
        })
    }

    /// Continuous quadruple with the sensor output map.
    pub fn sensor_model(&self) -> StateSpace<T> {
        StateSpace {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            d: self.d.clone(),
            dt: self.dt,
            conversion: crate::sysid::Conversion::Given,
            reflected_eigenvalues: 0,
        }
    }

    /// Continuous quadruple with every node as an output.
    pub fn full_model(&self) -> StateSpace<T> {
        StateSpace {
            c: self.c_full.clone(),
            d: self.d_full.clone(),
            ..self.sensor_model()
        }
    }
}

/// Thermal and smoke chains of one tunnel with a shared sensor layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TunnelModel<T: Real> {
    pub thermal_nodes: Vec<NodeModel<T>>,
    pub smoke_nodes: Vec<NodeModel<T>>,
    pub fire_nodes: BTreeSet<usize>,
    pub layout: SensorLayout,
    pub thermal: CompactModel<T>,
    pub smoke: CompactModel<T>,
}

impl<T: Real> TunnelModel<T> {
    pub fn assemble(
        thermal_nodes: Vec<NodeModel<T>>,
        smoke_nodes: Vec<NodeModel<T>>,
        layout: &SensorLayout,
        opts: &AssemblyOptions,
    ) -> Result<Self> {
        if thermal_nodes.len() != smoke_nodes.len() {
            return Err(Error::Assembly(format!(
                "{} thermal but {} smoke node models",
                thermal_nodes.len(),
                smoke_nodes.len()
            )));
        }
        let fire_of = |v: &[NodeModel<T>]| -> BTreeSet<usize> {
            v.iter().filter(|m| m.spec.fire_node).map(|m| m.node()).collect()
        };
        let fire_nodes = fire_of(&thermal_nodes);
        if fire_nodes != fire_of(&smoke_nodes) {
            return Err(Error::Assembly(
                "thermal and smoke chains disagree on fire nodes".into(),
            ));
        }
        let thermal = assemble_cascade(&thermal_nodes, layout, opts)?;
        let smoke = assemble_cascade(&smoke_nodes, layout, opts)?;
        if thermal.kind != ModelKind::Thermal || smoke.kind != ModelKind::Smoke {
            return Err(Error::Assembly("expected a thermal chain and a smoke chain".into()));
        }
        Ok(Self {
            thermal_nodes,
            smoke_nodes,
            fire_nodes,
            layout: layout.clone(),
            thermal,
            smoke,
        })
    }

    pub fn node_count(&self) -> usize {
        self.thermal_nodes.len()
    }

    pub fn dt(&self) -> T {
        self.thermal.dt
    }

    pub fn with_layout(&self, layout: &SensorLayout) -> Result<Self> {
        Ok(Self {
            layout: layout.clone(),
            thermal: self.thermal.with_layout(layout)?,
            smoke: self.smoke.with_layout(layout)?,
            ..self.clone()
        })
    }
}

impl CompactModel<f64> {
    pub fn to_record(&self) -> CompactModelRecord {
        CompactModelRecord {
            kind: self.kind,
            node_count: self.node_count(),
            inputs: self.inputs.clone(),
            offsets: self.offsets.clone(),
            orders: self.orders.clone(),
            sensors: self.layout.nodes().collect(),
            dt: self.dt,
            a: rows(&self.a),
            b: rows(&self.b),
            c_full: rows(&self.c_full),
            d_full: rows(&self.d_full),
        }
    }

    pub fn from_record(r: &CompactModelRecord) -> Result<Self> {
        let (n, m, p) = (r.orders.iter().sum::<usize>(), r.inputs.len(), r.node_count);
        let offsets_ok = r.orders.len() == p
            && r.offsets.len() == p
            && r.offsets
                .iter()
                .zip(&r.orders)
                .scan(0, |acc, (o, k)| {
                    let ok = *o == *acc;
                    *acc += k;
                    Some(ok)
                })
                .all(|ok| ok);
        if !offsets_ok {
            return Err(Error::Dimension(
                "compact record offsets do not match node orders".into(),
            ));
        }
        let layout = if r.sensors.is_empty() {
            SensorLayout::empty(p)
        } else {
            SensorLayout::new(r.sensors.iter().copied(), p)?
        };
        let c_full = matrix("c_full", &r.c_full, p, n)?;
        let d_full = matrix("d_full", &r.d_full, p, m)?;
        let (c, d) = select_rows(&c_full, &d_full, &layout);
        Ok(Self {
            kind: r.kind,
            a: matrix("a", &r.a, n, n)?,
            b: matrix("b", &r.b, n, m)?,
            c_full,
            d_full,
            c,
            d,
            inputs: r.inputs.clone(),
            offsets: r.offsets.clone(),
            orders: r.orders.clone(),
            layout,
            dt: r.dt,
        })
    }
}

impl TunnelModel<f64> {
    /// Node models plus both assembled chains in one model file.
    pub fn to_model_file(&self, identification: IdentificationConfig) -> ModelFile {
        let nodes: Vec<NodeModel<f64>> = self.thermal_nodes.iter().chain(&self.smoke_nodes).cloned().collect();
        let fire: Vec<usize> = self.fire_nodes.iter().copied().collect();
        let mut file = ModelFile::new(&nodes, self.node_count(), &fire, self.dt(), identification);
        file.compact = vec![self.thermal.to_record(), self.smoke.to_record()];
        file
    }

    /// Reassemble from the node models of a file; the result uses `layout`.
    pub fn from_model_file(file: &ModelFile, layout: &SensorLayout, opts: &AssemblyOptions) -> Result<Self> {
        Self::assemble(
            file.models(ModelKind::Thermal)?,
            file.models(ModelKind::Smoke)?,
            layout,
            opts,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::NodeChannelSpec;

    fn scalar_node(node: usize, fire: bool, a: f64, b: [f64; 2], c: f64) -> NodeModel<f64> {
        let spec = NodeChannelSpec::new(node, ModelKind::Thermal, fire).unwrap();
        let ss = StateSpace::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_row_slice(1, 2, &b),
            DMatrix::from_element(1, 1, c),
            DMatrix::zeros(1, 2),
            1.0,
        )
        .unwrap();
        NodeModel::new(spec, ss).unwrap()
    }

    #[test]
    fn single_fire_node_is_unchanged() {
        let n = scalar_node(1, true, -0.3, [0.7, 0.1], 2.0);
        let m = assemble_cascade(
            std::slice::from_ref(&n),
            &SensorLayout::full(1),
            &AssemblyOptions::default(),
        )
        .unwrap();
        assert_eq!(m.a, n.model.a);
        assert_eq!(m.b, n.model.b);
        assert_eq!(m.c, n.model.c);
        assert_eq!(m.d, n.model.d);
    }

    #[test]
    fn two_scalar_nodes() {
        let (a1, b11, b12) = (-0.5, 0.2, 0.3);
        let (a2, b21, b22) = (-0.25, 0.4, 0.6);
        let nodes = [
            scalar_node(1, true, a1, [b11, b12], 1.0),
            scalar_node(2, false, a2, [b21, b22], 1.0),
        ];
        let m = assemble_cascade(&nodes, &SensorLayout::full(2), &AssemblyOptions::default()).unwrap();
        assert_eq!(m.a, DMatrix::from_row_slice(2, 2, &[a1, 0.0, b21, a2]));
        assert_eq!(m.b, DMatrix::from_row_slice(2, 2, &[b11, b12, 0.0, b22]));
        assert_eq!(m.c, DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn sensor_rows_follow_layout() {
        let nodes = [
            scalar_node(1, true, -0.5, [0.2, 0.3], 1.5),
            scalar_node(2, false, -0.25, [0.4, 0.6], 2.5),
            scalar_node(3, false, -0.1, [0.4, 0.6], 3.5),
        ];
        let layout = SensorLayout::new([1, 3], 3).unwrap();
        let m = assemble_cascade(&nodes, &layout, &AssemblyOptions::default()).unwrap();
        assert_eq!(m.c.nrows(), 2);
        assert_eq!(m.c.row(1), m.c_full.row(2));
        assert_eq!(m.c[(1, 2)], 3.5);
    }

    #[test]
    fn compact_record_round_trip() {
        let nodes = [
            scalar_node(1, true, -0.5, [0.2, 0.3], 1.5),
            scalar_node(2, false, -0.25, [0.4, 0.6], 2.5),
        ];
        let layout = SensorLayout::new([2], 2).unwrap();
        let m = assemble_cascade(&nodes, &layout, &AssemblyOptions::default()).unwrap();
        let text = serde_json::to_string(&m.to_record()).unwrap();
        let back = CompactModel::from_record(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, m);
        let mut bad = m.to_record();
        bad.offsets = vec![0, 0];
        assert!(CompactModel::from_record(&bad).is_err());
    }

    #[test]
    fn internal_feedthrough_needs_substitution() {
        let mut n2 = scalar_node(2, false, -0.25, [0.4, 0.6], 1.0);
        n2.model.d[(0, 0)] = 0.5;
        let nodes = [scalar_node(1, true, -0.5, [0.2, 0.3], 1.0), n2];
        let layout = SensorLayout::full(2);
        let err = assemble_cascade(&nodes, &layout, &AssemblyOptions::default()).unwrap_err();
        assert!(err.to_string().contains("feedthrough"), "{err}");
        let opts = AssemblyOptions {
            substitute_feedthrough: true,
        };
        let m = assemble_cascade(&nodes, &layout, &opts).unwrap();
        // y2 = x2 + 0.5 y1 = x2 + 0.5 x1
        assert_eq!(m.c_full.row(1).iter().copied().collect::<Vec<_>>(), vec![0.5, 1.0]);
    }

    #[test]
    fn rejects_out_of_order_nodes() {
        let nodes = [
            scalar_node(2, false, -0.25, [0.4, 0.6], 1.0),
            scalar_node(1, true, -0.5, [0.2, 0.3], 1.0),
        ];
        assert!(assemble_cascade(&nodes, &SensorLayout::full(2), &AssemblyOptions::default()).is_err());
    }
}
