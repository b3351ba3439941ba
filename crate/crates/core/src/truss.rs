//! Linear-elastic 2D pin-jointed truss solved by the direct stiffness method,
//! and the 10-variable bridge response built on it.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BRIDGE_TOML: &str = include_str!("../data/bridge.toml");

/// Number of bridge input variables: P1..P6, A1, A2, E1, E2.
pub const BRIDGE_DIM: usize = 10;
/// Columns of the cross-section areas within a bridge input row.
pub const AREA_COLUMNS: [usize; 2] = [6, 7];
/// Columns of the applied loads within a bridge input row.
pub const LOAD_COLUMNS: [usize; 6] = [0, 1, 2, 3, 4, 5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    /// Horizontal bars, (E1, A1).
    Chord,
    /// Diagonal bars, (E2, A2).
    Diagonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub from: usize,
    pub to: usize,
    pub section: Section,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub node: usize,
    pub x: bool,
    pub y: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectionProps {
    pub modulus: f64,
    pub area: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrussGeometry {
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<Element>,
    pub supports: Vec<Support>,
    #[serde(default)]
    pub load_nodes: Vec<usize>,
    pub midspan_node: usize,
}

impl TrussGeometry {
    /// The default bridge shipped with the crate.
    pub fn bridge() -> Self {
        Self::from_toml_str(BRIDGE_TOML).expect("bundled bridge geometry is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let geom: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("geometry: {e}")))?;
        geom.validate()?;
        Ok(geom)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        let bad_node = |i: usize| i >= n;
        if self
            .elements
            .iter()
            .any(|e| bad_node(e.from) || bad_node(e.to) || e.from == e.to)
        {
            return Err(Error::Config(
                "geometry: element references an invalid node".into(),
            ));
        }
        if self.supports.iter().any(|s| bad_node(s.node))
            || self.load_nodes.iter().any(|&i| bad_node(i))
            || bad_node(self.midspan_node)
        {
            return Err(Error::Config("geometry: node index out of range".into()));
        }
        let unit = SectionProps {
            modulus: 1.0,
            area: 1.0,
        };
        let probe = vec![0.0; self.n_dofs()];
        self.solve(unit, unit, &probe)
            .map_err(|_| Error::Config("geometry: structure is a mechanism".into()))?;
        Ok(())
    }

    /// Checks the layout the bridge response relies on: six load nodes and a
    /// mid-span node on the symmetry axis.
    pub fn validate_bridge(&self) -> Result<()> {
        if self.load_nodes.len() != LOAD_COLUMNS.len() {
            return Err(Error::Config(format!(
                "geometry: expected {} load nodes, found {}",
                LOAD_COLUMNS.len(),
                self.load_nodes.len()
            )));
        }
        let (lo, hi) = self
            .nodes
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[0]), hi.max(p[0]))
            });
        let axis = 0.5 * (lo + hi);
        if (self.nodes[self.midspan_node][0] - axis).abs() > 1e-9 * (hi - lo) {
            return Err(Error::Config(
                "geometry: mid-span node is off the symmetry axis".into(),
            ));
        }
        Ok(())
    }

    fn element_geometry(&self, e: &Element) -> (f64, f64, f64) {
        let [x1, y1] = self.nodes[e.from];
        let [x2, y2] = self.nodes[e.to];
        let len = (x2 - x1).hypot(y2 - y1);
        (len, (x2 - x1) / len, (y2 - y1) / len)
    }

    /// Unconstrained global stiffness matrix.
    pub fn stiffness(&self, chord: SectionProps, diagonal: SectionProps) -> DMatrix<f64> {
        let nd = self.n_dofs();
        let mut k = DMatrix::zeros(nd, nd);
        for e in &self.elements {
            let props = match e.section {
                Section::Chord => chord,
                Section::Diagonal => diagonal,
            };
            let (len, c, s) = self.element_geometry(e);
            let ea_l = props.modulus * props.area / len;
            let dir = [-c, -s, c, s];
            let dofs = [2 * e.from, 2 * e.from + 1, 2 * e.to, 2 * e.to + 1];
            for a in 0..4 {
                for b in 0..4 {
                    k[(dofs[a], dofs[b])] += ea_l * dir[a] * dir[b];
                }
            }
        }
        k
    }

    fn free_dofs(&self) -> Vec<usize> {
        let mut fixed = vec![false; self.n_dofs()];
        for s in &self.supports {
            fixed[2 * s.node] |= s.x;
            fixed[2 * s.node + 1] |= s.y;
        }
        (0..self.n_dofs()).filter(|&d| !fixed[d]).collect()
    }

    /// Solve K u = F for the nodal displacements (restrained dofs are zero).
    pub fn solve(
        &self,
        chord: SectionProps,
        diagonal: SectionProps,
        forces: &[f64],
    ) -> Result<Vec<f64>> {
        let nd = self.n_dofs();
        if forces.len() != nd {
            return Err(Error::DimensionMismatch {
                expected: nd,
                got: forces.len(),
            });
        }
        for p in [chord, diagonal] {
            if !(p.modulus > 0.0 && p.area > 0.0 && p.modulus.is_finite() && p.area.is_finite()) {
                return Err(Error::SingularStiffness);
            }
        }
        let k = self.stiffness(chord, diagonal);
        let free = self.free_dofs();
        let nf = free.len();
        let kff = DMatrix::from_fn(nf, nf, |i, j| k[(free[i], free[j])]);
        let ff = DVector::from_fn(nf, |i, _| forces[free[i]]);
        let chol = kff.cholesky().ok_or(Error::SingularStiffness)?;
        let uf = chol.solve(&ff);
        let mut u = vec![0.0; nd];
        for (i, &d) in free.iter().enumerate() {
            u[d] = uf[i];
        }
        Ok(u)
    }

    fn nodal_loads(&self, input: &BridgeInput) -> Vec<f64> {
        let mut f = vec![0.0; self.n_dofs()];
        for (&node, &p) in self.load_nodes.iter().zip(&input.loads) {
            f[2 * node + 1] -= p;
        }
        f
    }
}

/// Bridge input vector `[P1..P6, A1, A2, E1, E2]` in N, m², Pa.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BridgeInput {
    pub loads: [f64; 6],
    pub a1: f64,
    pub a2: f64,
    pub e1: f64,
    pub e2: f64,
}

impl BridgeInput {
    pub fn from_slice(x: &[f64]) -> Result<Self> {
        if x.len() != BRIDGE_DIM {
            return Err(Error::DimensionMismatch {
                expected: BRIDGE_DIM,
                got: x.len(),
            });
        }
        let mut loads = [0.0; 6];
        loads.copy_from_slice(&x[..6]);
        let input = Self {
            loads,
            a1: x[6],
            a2: x[7],
            e1: x[8],
            e2: x[9],
        };
        if loads.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("loads", "must be finite"));
        }
        Ok(input)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.loads.to_vec();
        v.extend_from_slice(&[self.a1, self.a2, self.e1, self.e2]);
        v
    }

    fn sections(&self) -> (SectionProps, SectionProps) {
        (
            SectionProps {
                modulus: self.e1,
                area: self.a1,
            },
            SectionProps {
                modulus: self.e2,
                area: self.a2,
            },
        )
    }
}

/// Nodal displacement vector for the bridge loaded by `input`.
pub fn solve_truss(geom: &TrussGeometry, input: &BridgeInput) -> Result<Vec<f64>> {
    let (chord, diagonal) = input.sections();
    geom.solve(chord, diagonal, &geom.nodal_loads(input))
}

/// Mid-span deflection, positive downward.
///
/// For every load case the response can reach a threshold in, this is the
/// magnitude of the vertical mid-span displacement.
pub fn midspan_deflection(geom: &TrussGeometry, input: &BridgeInput) -> Result<f64> {
    let u = solve_truss(geom, input)?;
    Ok(-u[2 * geom.midspan_node + 1])
}

/// The bridge as a response oracle over 10-dimensional input rows.
#[derive(Clone, Debug)]
pub struct BridgeModel {
    geometry: TrussGeometry,
}

impl BridgeModel {
    pub fn new(geometry: TrussGeometry) -> Result<Self> {
        geometry.validate_bridge()?;
        Ok(Self { geometry })
    }

    pub fn geometry(&self) -> &TrussGeometry {
        &self.geometry
    }

    pub fn deflection(&self, x: &[f64]) -> Result<f64> {
        midspan_deflection(&self.geometry, &BridgeInput::from_slice(x)?)
    }
}

impl Default for BridgeModel {
    fn default() -> Self {
        Self {
            geometry: TrussGeometry::bridge(),
        }
    }
}
