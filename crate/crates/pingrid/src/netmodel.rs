//! Physical microgrid data model: buses, R-L lines and loads, DG/LCL
//! parameters, per-unit bases and admittance-matrix construction.
//!
//! Everything at module boundaries is per-unit; SI appears only in the
//! `[bases]` block of the network file. Loads are stored as series R-L
//! branches fixed from their rated (P, Q) at nominal voltage and frequency:
//! power flow treats them as voltage-dependent demand, the time-domain
//! simulation integrates the branch currents directly.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result};

/// One transmission line as a series R-L branch between two buses (p.u.).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Series resistance, p.u.
    pub r: f64,
    /// Series inductance, p.u. (reactance at 1 p.u. frequency).
    pub l: f64,
}

impl Line {
    /// Branch admittance at p.u. frequency `omega`.
    pub fn admittance(&self, omega: f64) -> Complex64 {
        1.0 / Complex64::new(self.r, omega * self.l)
    }
}

/// Series R-L load branch (p.u.).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadRl {
    pub r: f64,
    pub l: f64,
}

impl LoadRl {
    /// Fix (R, L) so the branch draws exactly `(p, q)` at 1 p.u. voltage and
    /// frequency: `Z = V^2 / conj(S)`.
    pub fn from_rated(p: f64, q: f64) -> Result<Self> {
        if !(p > 0.0) || !(q > 0.0) {
            return Err(Error::InvalidModel(format!(
                "rated load must have P > 0 and Q > 0, got ({p}, {q})"
            )));
        }
        let s2 = p * p + q * q;
        Ok(LoadRl {
            r: p / s2,
            l: q / s2,
        })
    }

    /// Rated (P, Q) drawn at 1 p.u. voltage and frequency (inverse of
    /// [`from_rated`]).
    ///
    /// [`from_rated`]: LoadRl::from_rated
    pub fn rated_pq(&self) -> (f64, f64) {
        let z2 = self.r * self.r + self.l * self.l;
        (self.r / z2, self.l / z2)
    }

    /// Branch admittance at p.u. frequency `omega`.
    pub fn admittance(&self, omega: f64) -> Complex64 {
        1.0 / Complex64::new(self.r, omega * self.l)
    }

    /// Demand (P, Q) drawn at voltage magnitude `v` and frequency `omega`.
    pub fn demand(&self, v: f64, omega: f64) -> (f64, f64) {
        let x = omega * self.l;
        let z2 = self.r * self.r + x * x;
        (v * v * self.r / z2, v * v * x / z2)
    }
}

/// Output LCL filter parameters (p.u.).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LclParams {
    pub l_f: f64,
    pub r_f: f64,
    pub c_f: f64,
    pub l_c: f64,
    pub r_c: f64,
}

/// Inner voltage/current PI controller gains plus the output-current
/// feed-forward gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiGains {
    pub k_pv: f64,
    pub k_iv: f64,
    pub k_pc: f64,
    pub k_ic: f64,
    pub k_f: f64,
}

/// Droop, filter and controller parameters of one DG inverter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgParams {
    /// omega-P droop slope, p.u. frequency per p.u. active power.
    pub m_p: f64,
    /// V-Q droop slope, p.u. voltage per p.u. reactive power.
    pub n_q: f64,
    pub lcl: LclParams,
    /// Power-measurement low-pass cutoff, rad/s.
    pub omega_c: f64,
    pub gains: PiGains,
}

/// A DG attached to a bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dg {
    pub bus: usize,
    pub params: DgParams,
}

/// Per-unit bases (SI).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bases {
    /// VA.
    pub power: f64,
    /// V.
    pub voltage: f64,
    /// rad/s.
    pub frequency: f64,
}

/// The physical layer of the microgrid.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub bus_count: usize,
    pub dgs: Vec<Dg>,
    pub lines: Vec<Line>,
    /// Loads keyed by bus index; at most one record per bus.
    pub loads: BTreeMap<usize, LoadRl>,
    pub bases: Bases,
    /// Virtual node-to-ground resistance, p.u.; `f64::INFINITY` disables the
    /// shunt (accepted by power flow, rejected by the dynamics).
    pub virtual_resistance: f64,
    /// Angle-reference bus; must host a DG.
    pub reference_bus: usize,
}

/// One invariant violation found by [`NetworkModel::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic(pub String);

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl NetworkModel {
    pub fn dg_count(&self) -> usize {
        self.dgs.len()
    }

    /// Bus indices hosting DGs, in DG order (= cyber-graph node order).
    pub fn dg_bus_ids(&self) -> Vec<usize> {
        self.dgs.iter().map(|d| d.bus).collect()
    }

    /// Index into `dgs` of the reference DG.
    pub fn reference_dg(&self) -> Option<usize> {
        self.dgs.iter().position(|d| d.bus == self.reference_bus)
    }

    /// Bus indices without a DG, ascending (the load-voltage unknowns).
    pub fn non_dg_buses(&self) -> Vec<usize> {
        let dg: Vec<usize> = self.dg_bus_ids();
        (0..self.bus_count).filter(|b| !dg.contains(b)).collect()
    }

    /// Check every type invariant; returns one diagnostic per violation and
    /// never aborts.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut push = |s: String| out.push(Diagnostic(s));

        if self.bus_count == 0 {
            push("bus count must be positive".into());
        }
        if self.dgs.is_empty() {
            push("model has no DGs".into());
        }
        let mut seen = BTreeMap::new();
        for (i, dg) in self.dgs.iter().enumerate() {
            if dg.bus >= self.bus_count {
                push(format!("dg {i}: bus {} out of range", dg.bus));
            }
            if let Some(prev) = seen.insert(dg.bus, i) {
                push(format!(
                    "dg {i}: duplicate DG bus {} (also dg {prev})",
                    dg.bus
                ));
            }
            let p = &dg.params;
            if !(p.m_p > 0.0) {
                push(format!("dg {i}: m_p must be > 0, got {}", p.m_p));
            }
            if !(p.n_q > 0.0) {
                push(format!("dg {i}: n_q must be > 0, got {}", p.n_q));
            }
            for (name, v) in [
                ("L_f", p.lcl.l_f),
                ("r_f", p.lcl.r_f),
                ("C_f", p.lcl.c_f),
                ("L_c", p.lcl.l_c),
                ("r_c", p.lcl.r_c),
            ] {
                if !(v > 0.0) {
                    push(format!("dg {i}: LCL {name} must be > 0, got {v}"));
                }
            }
            if !(p.omega_c > 0.0) {
                push(format!("dg {i}: omega_c must be > 0, got {}", p.omega_c));
            }
        }
        if !self.dgs.iter().any(|d| d.bus == self.reference_bus) {
            push(format!(
                "reference bus {} does not host a DG",
                self.reference_bus
            ));
        }
        for (i, line) in self.lines.iter().enumerate() {
            if line.from == line.to {
                push(format!("line {i}: endpoints coincide at bus {}", line.from));
            }
            if line.from >= self.bus_count || line.to >= self.bus_count {
                push(format!(
                    "line {i}: endpoint ({}, {}) out of range",
                    line.from, line.to
                ));
            }
            if line.r < 0.0 {
                push(format!("line {i}: R must be >= 0, got {}", line.r));
            }
            if !(line.l > 0.0) {
                push(format!("line {i}: L must be > 0, got {}", line.l));
            }
        }
        for (&bus, load) in &self.loads {
            if bus >= self.bus_count {
                push(format!("load at bus {bus}: bus out of range"));
            }
            if !(load.r > 0.0) {
                push(format!("load at bus {bus}: R must be > 0, got {}", load.r));
            }
            if !(load.l > 0.0) {
                push(format!("load at bus {bus}: L must be > 0, got {}", load.l));
            }
        }
        if !(self.virtual_resistance > 0.0) {
            push(format!(
                "virtual resistance must be > 0 (or infinite), got {}",
                self.virtual_resistance
            ));
        }
        for (name, v) in [
            ("power", self.bases.power),
            ("voltage", self.bases.voltage),
            ("frequency", self.bases.frequency),
        ] {
            if !(v > 0.0) {
                push(format!("base {name} must be > 0, got {v}"));
            }
        }
        if !self.electrically_connected() {
            push("electrical graph is not connected".into());
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    pub fn require_valid(&self) -> Result<()> {
        let diags = self.validate();
        if diags.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(
                diags
                    .iter()
                    .map(|d| d.0.as_str())
                    .collect::<Vec<_>>()
                    .join("; "),
            ))
        }
    }

    /// Whether the line graph connects every bus.
    pub fn electrically_connected(&self) -> bool {
        if self.bus_count <= 1 {
            return true;
        }
        let mut adj = vec![Vec::new(); self.bus_count];
        for line in &self.lines {
            if line.from < self.bus_count && line.to < self.bus_count && line.from != line.to {
                adj[line.from].push(line.to);
                adj[line.to].push(line.from);
            }
        }
        let mut seen = vec![false; self.bus_count];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.bus_count
    }

    /// Bus admittance matrix at p.u. frequency `omega`: series lines plus the
    /// 1/R_N shunt at every node. Load branches are *not* folded in; power
    /// flow treats loads as demand.
    pub fn build_admittance(&self, omega: f64) -> Result<DMatrix<Complex64>> {
        if !(omega > 0.0) {
            return Err(Error::InvalidModel(format!(
                "admittance requires omega > 0, got {omega}"
            )));
        }
        if !self.electrically_connected() {
            return Err(Error::InvalidModel(
                "admittance requires a connected electrical graph".into(),
            ));
        }
        let n = self.bus_count;
        let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for line in &self.lines {
            let yl = line.admittance(omega);
            y[(line.from, line.from)] += yl;
            y[(line.to, line.to)] += yl;
            y[(line.from, line.to)] -= yl;
            y[(line.to, line.from)] -= yl;
        }
        if self.virtual_resistance.is_finite() {
            let shunt = Complex64::new(1.0 / self.virtual_resistance, 0.0);
            for k in 0..n {
                y[(k, k)] += shunt;
            }
        }
        Ok(y)
    }

    /// Totals of the rated (P, Q) of all load records.
    pub fn aggregate_load(&self) -> (f64, f64) {
        self.loads
            .values()
            .map(|l| l.rated_pq())
            .fold((0.0, 0.0), |(p, q), (lp, lq)| (p + lp, q + lq))
    }

    /// Parse the sectioned network description format (see the shipped data
    /// files for a commented example).
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        #[derive(PartialEq, Clone, Copy)]
        enum Section {
            None,
            Bases,
            Buses,
            Lines,
            Loads,
            Dgs,
        }
        let mut section = Section::None;
        let mut bases = (None, None, None);
        let mut bus_count = None;
        let mut reference = None;
        let mut r_n = None;
        let mut lines = Vec::new();
        let mut loads = BTreeMap::new();
        let mut dgs = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = match name {
                    "bases" => Section::Bases,
                    "buses" => Section::Buses,
                    "lines" => Section::Lines,
                    "loads" => Section::Loads,
                    "dgs" => Section::Dgs,
                    other => {
                        return Err(Error::parse(
                            origin,
                            lineno,
                            format!("unknown section [{other}]"),
                        ))
                    }
                };
                continue;
            }
            let f64_field = |tok: &str| -> Result<f64> {
                if tok.eq_ignore_ascii_case("inf") {
                    return Ok(f64::INFINITY);
                }
                tok.parse::<f64>()
                    .map_err(|_| Error::parse(origin, lineno, format!("bad number {tok:?}")))
            };
            let usize_field = |tok: &str| -> Result<usize> {
                tok.parse::<usize>()
                    .map_err(|_| Error::parse(origin, lineno, format!("bad index {tok:?}")))
            };
            match section {
                Section::None => {
                    return Err(Error::parse(origin, lineno, "content before first section"))
                }
                Section::Bases | Section::Buses => {
                    let Some((key, value)) = line.split_once('=') else {
                        return Err(Error::parse(origin, lineno, "expected key = value"));
                    };
                    let (key, value) = (key.trim(), value.trim());
                    match (section, key) {
                        (Section::Bases, "power") => bases.0 = Some(f64_field(value)?),
                        (Section::Bases, "voltage") => bases.1 = Some(f64_field(value)?),
                        (Section::Bases, "frequency") => bases.2 = Some(f64_field(value)?),
                        (Section::Buses, "count") => bus_count = Some(usize_field(value)?),
                        (Section::Buses, "reference") => reference = Some(usize_field(value)?),
                        (Section::Buses, "virtual_resistance") => r_n = Some(f64_field(value)?),
                        _ => {
                            return Err(Error::parse(
                                origin,
                                lineno,
                                format!("unknown key {key:?}"),
                            ))
                        }
                    }
                }
                Section::Lines => {
                    let toks: Vec<&str> = line.split_whitespace().collect();
                    if toks.len() != 4 {
                        return Err(Error::parse(origin, lineno, "expected: from to R L"));
                    }
                    lines.push(Line {
                        from: usize_field(toks[0])?,
                        to: usize_field(toks[1])?,
                        r: f64_field(toks[2])?,
                        l: f64_field(toks[3])?,
                    });
                }
                Section::Loads => {
                    let toks: Vec<&str> = line.split_whitespace().collect();
                    if toks.len() != 3 {
                        return Err(Error::parse(origin, lineno, "expected: bus P Q"));
                    }
                    let bus = usize_field(toks[0])?;
                    let load = LoadRl::from_rated(f64_field(toks[1])?, f64_field(toks[2])?)
                        .map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
                    if loads.insert(bus, load).is_some() {
                        return Err(Error::parse(
                            origin,
                            lineno,
                            format!("duplicate load at bus {bus}"),
                        ));
                    }
                }
                Section::Dgs => {
                    let toks: Vec<&str> = line.split_whitespace().collect();
                    if toks.len() != 14 {
                        return Err(Error::parse(
                            origin,
                            lineno,
                            "expected: bus m_p n_q L_f r_f C_f L_c r_c omega_c \
                             K_pv K_iv K_pc K_ic K_F",
                        ));
                    }
                    dgs.push(Dg {
                        bus: usize_field(toks[0])?,
                        params: DgParams {
                            m_p: f64_field(toks[1])?,
                            n_q: f64_field(toks[2])?,
                            lcl: LclParams {
                                l_f: f64_field(toks[3])?,
                                r_f: f64_field(toks[4])?,
                                c_f: f64_field(toks[5])?,
                                l_c: f64_field(toks[6])?,
                                r_c: f64_field(toks[7])?,
                            },
                            omega_c: f64_field(toks[8])?,
                            gains: PiGains {
                                k_pv: f64_field(toks[9])?,
                                k_iv: f64_field(toks[10])?,
                                k_pc: f64_field(toks[11])?,
                                k_ic: f64_field(toks[12])?,
                                k_f: f64_field(toks[13])?,
                            },
                        },
                    });
                }
            }
        }

        let (Some(power), Some(voltage), Some(frequency)) = bases else {
            return Err(Error::parse(
                origin,
                0,
                "missing [bases] power/voltage/frequency",
            ));
        };
        let Some(bus_count) = bus_count else {
            return Err(Error::parse(origin, 0, "missing [buses] count"));
        };
        let Some(reference_bus) = reference else {
            return Err(Error::parse(origin, 0, "missing [buses] reference"));
        };
        Ok(NetworkModel {
            bus_count,
            dgs,
            lines,
            loads,
            bases: Bases {
                power,
                voltage,
                frequency,
            },
            virtual_resistance: r_n.unwrap_or(1000.0),
            reference_bus,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text, path)
    }

    /// Serialize back to the sectioned file format.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[bases]");
        let _ = writeln!(s, "power = {}", self.bases.power);
        let _ = writeln!(s, "voltage = {}", self.bases.voltage);
        let _ = writeln!(s, "frequency = {}", self.bases.frequency);
        let _ = writeln!(s, "[buses]");
        let _ = writeln!(s, "count = {}", self.bus_count);
        let _ = writeln!(s, "reference = {}", self.reference_bus);
        if self.virtual_resistance.is_finite() {
            let _ = writeln!(s, "virtual_resistance = {}", self.virtual_resistance);
        } else {
            let _ = writeln!(s, "virtual_resistance = inf");
        }
        let _ = writeln!(s, "[lines]");
        for line in &self.lines {
            let _ = writeln!(s, "{} {} {} {}", line.from, line.to, line.r, line.l);
        }
        let _ = writeln!(s, "[loads]");
        for (bus, load) in &self.loads {
            let (p, q) = load.rated_pq();
            let _ = writeln!(s, "{bus} {p:.12e} {q:.12e}");
        }
        let _ = writeln!(s, "[dgs]");
        for dg in &self.dgs {
            let p = &dg.params;
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {} {} {} {} {} {} {} {}",
                dg.bus,
                p.m_p,
                p.n_q,
                p.lcl.l_f,
                p.lcl.r_f,
                p.lcl.c_f,
                p.lcl.l_c,
                p.lcl.r_c,
                p.omega_c,
                p.gains.k_pv,
                p.gains.k_iv,
                p.gains.k_pc,
                p.gains.k_ic,
                p.gains.k_f
            );
        }
        s
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn default_dg_params() -> DgParams {
        DgParams {
            m_p: 2e-3,
            n_q: 0.02,
            lcl: LclParams {
                l_f: 0.08,
                r_f: 0.005,
                c_f: 0.10,
                l_c: 0.02,
                r_c: 0.004,
            },
            omega_c: 31.41,
            gains: PiGains {
                k_pv: 0.5,
                k_iv: 400.0,
                k_pc: 1.0,
                k_ic: 1500.0,
                k_f: 0.75,
            },
        }
    }

    fn two_bus(r_n: f64) -> NetworkModel {
        NetworkModel {
            bus_count: 2,
            dgs: vec![Dg {
                bus: 0,
                params: default_dg_params(),
            }],
            lines: vec![Line {
                from: 0,
                to: 1,
                r: 0.0,
                l: 1.0,
            }],
            loads: BTreeMap::new(),
            bases: Bases {
                power: 1e6,
                voltage: 400.0,
                frequency: 100.0 * std::f64::consts::PI,
            },
            virtual_resistance: r_n,
            reference_bus: 0,
        }
    }

    #[test]
    fn admittance_single_branch_identity() {
        let net = two_bus(f64::INFINITY);
        let y = net.build_admittance(1.0).unwrap();
        let j = Complex64::new(0.0, 1.0);
        assert_eq!(y[(0, 0)], -j);
        assert_eq!(y[(1, 1)], -j);
        assert_eq!(y[(0, 1)], j);
        assert_eq!(y[(1, 0)], j);
    }

    #[test]
    fn admittance_shunt_addition() {
        let net = two_bus(1000.0);
        let y = net.build_admittance(1.0).unwrap();
        assert_abs_diff_eq!(y[(0, 0)].re, 0.001, epsilon = 1e-15);
        assert_abs_diff_eq!(y[(1, 1)].re, 0.001, epsilon = 1e-15);
        assert_eq!(y[(0, 1)], Complex64::new(0.0, 1.0));
    }

    #[test]
    fn admittance_rejects_bad_omega() {
        let net = two_bus(1000.0);
        assert!(net.build_admittance(0.0).is_err());
        assert!(net.build_admittance(-1.0).is_err());
    }

    #[test]
    fn admittance_rejects_disconnected() {
        let mut net = two_bus(1000.0);
        net.bus_count = 3;
        assert!(net.build_admittance(1.0).is_err());
    }

    #[test]
    fn admittance_is_bitwise_symmetric_and_linear_in_branches() {
        // Stamping lines one at a time must equal stamping all at once.
        let mut net = two_bus(500.0);
        net.bus_count = 4;
        net.lines = vec![
            Line {
                from: 0,
                to: 1,
                r: 0.01,
                l: 0.02,
            },
            Line {
                from: 1,
                to: 2,
                r: 0.03,
                l: 0.01,
            },
            Line {
                from: 2,
                to: 3,
                r: 0.02,
                l: 0.05,
            },
            Line {
                from: 0,
                to: 3,
                r: 0.015,
                l: 0.04,
            },
            // parallel branch
            Line {
                from: 0,
                to: 1,
                r: 0.01,
                l: 0.03,
            },
        ];
        let omega = 1.013;
        let y = net.build_admittance(omega).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(y[(i, j)], y[(j, i)], "bit-equal symmetry");
            }
        }
        // Element-by-element stamping oracle.
        let mut oracle = DMatrix::from_element(4, 4, Complex64::new(0.0, 0.0));
        for line in &net.lines {
            let yl = 1.0 / Complex64::new(line.r, omega * line.l);
            oracle[(line.from, line.from)] += yl;
            oracle[(line.to, line.to)] += yl;
            oracle[(line.from, line.to)] -= yl;
            oracle[(line.to, line.from)] -= yl;
        }
        for k in 0..4 {
            oracle[(k, k)] += Complex64::new(1.0 / 500.0, 0.0);
        }
        for i in 0..4 {
            for j in 0..4 {
                assert!((y[(i, j)] - oracle[(i, j)]).norm() <= 1e-14);
            }
        }
        // Row sums equal the shunt terms.
        for i in 0..4 {
            let sum: Complex64 = (0..4).map(|j| y[(i, j)]).sum();
            assert_abs_diff_eq!(sum.re, 1.0 / 500.0, epsilon = 1e-12);
            assert_abs_diff_eq!(sum.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn admittance_row_sums_vanish_without_shunt() {
        let mut net = two_bus(f64::INFINITY);
        net.bus_count = 3;
        net.lines.push(Line {
            from: 1,
            to: 2,
            r: 0.02,
            l: 0.07,
        });
        let y = net.build_admittance(0.97).unwrap();
        for i in 0..3 {
            let sum: Complex64 = (0..3).map(|j| y[(i, j)]).sum();
            assert!(sum.norm() <= 1e-12);
        }
    }

    #[test]
    fn aggregate_load_cases() {
        let mut net = two_bus(1000.0);
        assert_eq!(net.aggregate_load(), (0.0, 0.0));
        net.loads
            .insert(1, LoadRl::from_rated(0.0989, 0.0571).unwrap());
        let (p, q) = net.aggregate_load();
        assert_abs_diff_eq!(p, 0.0989, epsilon = 1e-12);
        assert_abs_diff_eq!(q, 0.0571, epsilon = 1e-12);
    }

    #[test]
    fn load_rated_round_trip() {
        let load = LoadRl::from_rated(0.4109, 0.1903).unwrap();
        let (p, q) = load.rated_pq();
        assert_abs_diff_eq!(p, 0.4109, epsilon = 1e-14);
        assert_abs_diff_eq!(q, 0.1903, epsilon = 1e-14);
        let (pd, qd) = load.demand(1.0, 1.0);
        assert_abs_diff_eq!(pd, 0.4109, epsilon = 1e-14);
        assert_abs_diff_eq!(qd, 0.1903, epsilon = 1e-14);
    }

    #[test]
    fn validate_flags_violations_with_identity() {
        let mut net = two_bus(1000.0);
        net.lines[0].l = 0.0;
        let diags = net.validate();
        assert!(diags.iter().any(|d| d.0.contains("line 0")));

        let mut net = two_bus(1000.0);
        net.dgs.push(Dg {
            bus: 0,
            params: default_dg_params(),
        });
        let diags = net.validate();
        assert!(diags.iter().any(|d| d.0.contains("duplicate DG bus 0")));

        assert!(two_bus(1000.0).validate().is_empty());
    }

    #[test]
    fn network_file_round_trip() {
        let mut net = two_bus(1000.0);
        net.loads.insert(1, LoadRl::from_rated(0.25, 0.11).unwrap());
        let text = net.to_file_string();
        let back = NetworkModel::parse(&text, Path::new("mem")).unwrap();
        assert_eq!(net.bus_count, back.bus_count);
        assert_eq!(net.lines, back.lines);
        assert_eq!(net.dgs, back.dgs);
        assert_abs_diff_eq!(net.loads[&1].r, back.loads[&1].r, epsilon = 1e-14);
        assert_abs_diff_eq!(net.loads[&1].l, back.loads[&1].l, epsilon = 1e-14);
    }
}
