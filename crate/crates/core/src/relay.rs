//! Quadrilateral distance-relay baseline: anti-alias filtering, decimation,
//! one-cycle DFT phasors, apparent impedances and zone decisions.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use crate::dsp::{butterworth_lowpass, IirCoeffs};
use crate::error::{Error, Result};
use crate::synth::WaveformRecord;

/// Samples per cycle expected by the phasor estimator.
pub const PHASOR_WINDOW: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaySettings {
    pub z1: Complex64,
    pub z0: Complex64,
    pub z_line: Complex64,
    pub zone1_factor: f64,
    pub zone2_factor: f64,
    /// Right-blinder resistance per zone; `None` uses `2·|Re(reach)| + 10` Ω.
    pub resistive_reach_ohm: Option<f64>,
    pub directional_angle_deg: f64,
    pub left_blinder_angle_deg: f64,
    /// Denominator magnitude below which a point is indeterminate.
    pub current_floor: f64,
    pub filter_order: usize,
    pub cutoff_hz: f64,
    pub system_freq_hz: f64,
    /// Cycles of decimated output discarded while the filter settles.
    pub warmup_cycles: usize,
}

impl Default for RelaySettings {
    fn default() -> Self {
        RelaySettings {
            z1: Complex64::new(0.23, 7.6),
            z0: Complex64::new(8.19, 27.55),
            z_line: Complex64::new(1.0, 30.0),
            zone1_factor: 0.8,
            zone2_factor: 1.2,
            resistive_reach_ohm: None,
            directional_angle_deg: -15.0,
            left_blinder_angle_deg: 115.0,
            current_floor: 1e-4,
            filter_order: 5,
            cutoff_hz: 400.0,
            system_freq_hz: 60.0,
            warmup_cycles: 1,
        }
    }
}

impl RelaySettings {
    pub fn k0(&self) -> Complex64 {
        (self.z0 - self.z1) / (3.0 * self.z1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.z1.norm() == 0.0 {
            return Err(Error::invalid("Z1 must be nonzero"));
        }
        if !(self.zone1_factor > 0.0 && self.zone2_factor >= self.zone1_factor) {
            return Err(Error::invalid("zone factors must satisfy 0 < zone1 ≤ zone2"));
        }
        if self.z_line.im <= 0.0 {
            return Err(Error::invalid("line reactance must be positive"));
        }
        if let Some(r) = self.resistive_reach_ohm {
            if !(r > 0.0) {
                return Err(Error::invalid("resistive reach must be positive"));
            }
        }
        let dir = self.directional_angle_deg;
        let left = self.left_blinder_angle_deg;
        if !(-90.0 < dir && dir <= 0.0 && 90.0 < left && left < 180.0) {
            return Err(Error::invalid("directional line must lie in (-90°, 0°] and left blinder in (90°, 180°)"));
        }
        Ok(())
    }

    pub fn zone_polygon(&self, zone: Zone) -> Result<Quadrilateral> {
        let factor = match zone {
            Zone::Zone1 => self.zone1_factor,
            Zone::Zone2 => self.zone2_factor,
            Zone::Outside => return Err(Error::invalid("no polygon for the outside region")),
        };
        let reach = self.z_line * factor;
        let r_res = self.resistive_reach_ohm.unwrap_or(2.0 * reach.re.abs() + 10.0);
        Ok(Quadrilateral::build(
            r_res,
            reach.im,
            self.z_line.arg(),
            self.directional_angle_deg,
            self.left_blinder_angle_deg,
        ))
    }
}

/// Butterworth low-pass anti-aliasing filter.
pub fn butterworth_design(order: usize, cutoff_hz: f64, fs_hz: f64) -> Result<IirCoeffs> {
    butterworth_lowpass(order, cutoff_hz, fs_hz)
}

/// Fundamental phasor of one cycle: `2/N · Σ x[n] e^{-j2πn/N}`.
pub fn phasor_estimate(window: &[f64]) -> Result<Complex64> {
    if window.len() != PHASOR_WINDOW {
        return Err(Error::shape(format!("{PHASOR_WINDOW} samples"), window.len()));
    }
    let n = PHASOR_WINDOW as f64;
    let sum: Complex64 =
        window.iter().enumerate().map(|(k, &x)| x * Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n)).sum();
    Ok(sum * (2.0 / n))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Element {
    Ag,
    Bg,
    Cg,
    Ab,
    Bc,
    Ca,
}

impl Element {
    pub const ALL: [Element; 6] = [Element::Ag, Element::Bg, Element::Cg, Element::Ab, Element::Bc, Element::Ca];
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Element::Ag => "AG",
            Element::Bg => "BG",
            Element::Cg => "CG",
            Element::Ab => "AB",
            Element::Bc => "BC",
            Element::Ca => "CA",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpedancePoint {
    pub element: Element,
    pub r: f64,
    pub x: f64,
    pub time_s: f64,
    /// Denominator current below the floor; `r` and `x` are NaN.
    pub indeterminate: bool,
}

impl ImpedancePoint {
    pub fn z(&self) -> Complex64 {
        Complex64::new(self.r, self.x)
    }
}

/// Ground elements with zero-sequence compensation, phase elements from
/// delta quantities.
pub fn apparent_impedances(
    v: &[Complex64; 3],
    i: &[Complex64; 3],
    settings: &RelaySettings,
    time_s: f64,
) -> [ImpedancePoint; 6] {
    let i0 = (i[0] + i[1] + i[2]) / 3.0;
    let k0 = settings.k0();
    let point = |element: Element, num: Complex64, den: Complex64| {
        if den.norm() < settings.current_floor {
            ImpedancePoint { element, r: f64::NAN, x: f64::NAN, time_s, indeterminate: true }
        } else {
            let z = num / den;
            ImpedancePoint { element, r: z.re, x: z.im, time_s, indeterminate: false }
        }
    };
    [
        point(Element::Ag, v[0], i[0] + 3.0 * k0 * i0),
        point(Element::Bg, v[1], i[1] + 3.0 * k0 * i0),
        point(Element::Cg, v[2], i[2] + 3.0 * k0 * i0),
        point(Element::Ab, v[0] - v[1], i[0] - i[1]),
        point(Element::Bc, v[1] - v[2], i[1] - i[2]),
        point(Element::Ca, v[2] - v[0], i[2] - i[0]),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Zone1,
    Zone2,
    Outside,
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Zone::Zone1 => "zone1",
            Zone::Zone2 => "zone2",
            Zone::Outside => "outside",
        })
    }
}

/// Convex quadrilateral, vertices counter-clockwise starting at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadrilateral {
    pub vertices: [(f64, f64); 4],
}

impl Quadrilateral {
    /// Origin, directional line ∩ right blinder, right blinder ∩ top,
    /// top ∩ left blinder.
    fn build(r_res: f64, x_reach: f64, line_angle: f64, dir_deg: f64, left_deg: f64) -> Self {
        let (dc, ds) = (dir_deg.to_radians().cos(), dir_deg.to_radians().sin());
        let (lc, ls) = (line_angle.cos(), line_angle.sin());
        // t·(dc, ds) = (r_res, 0) + s·(lc, ls)
        let det = dc * -ls - ds * -lc;
        let t = (r_res * -ls) / det;
        let v1 = (t * dc, t * ds);
        let s_top = x_reach / ls;
        let v2 = (r_res + s_top * lc, x_reach);
        let left = left_deg.to_radians();
        let v3 = (x_reach * left.cos() / left.sin(), x_reach);
        Quadrilateral { vertices: [(0.0, 0.0), v1, v2, v3] }
    }

    /// Boundary counts as inside.
    pub fn contains(&self, r: f64, x: f64) -> bool {
        let tol = 1e-12;
        (0..4).all(|k| {
            let (ax, ay) = self.vertices[k];
            let (bx, by) = self.vertices[(k + 1) % 4];
            let cross = (bx - ax) * (x - ay) - (by - ay) * (r - ax);
            cross >= -tol * (1.0 + (bx - ax).abs() + (by - ay).abs())
        })
    }
}

pub fn zone_decision(point: &ImpedancePoint, settings: &RelaySettings) -> Result<Zone> {
    if point.indeterminate || !point.r.is_finite() || !point.x.is_finite() {
        return Err(Error::invalid("zone decision on an indeterminate point"));
    }
    if settings.zone_polygon(Zone::Zone1)?.contains(point.r, point.x) {
        Ok(Zone::Zone1)
    } else if settings.zone_polygon(Zone::Zone2)?.contains(point.r, point.x) {
        Ok(Zone::Zone2)
    } else {
        Ok(Zone::Outside)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Time-ordered; six points (one per element) per decimated step.
    pub points: Vec<ImpedancePoint>,
}

impl Trajectory {
    pub fn element(&self, e: Element) -> impl Iterator<Item = &ImpedancePoint> {
        self.points.iter().filter(move |p| p.element == e)
    }

    /// First time each element enters zone 1 and zone 2.
    pub fn summary(&self, settings: &RelaySettings) -> Result<Vec<ZoneSummary>> {
        let z1 = settings.zone_polygon(Zone::Zone1)?;
        let z2 = settings.zone_polygon(Zone::Zone2)?;
        Ok(Element::ALL
            .iter()
            .map(|&e| {
                let first = |poly: &Quadrilateral| {
                    self.element(e).find(|p| !p.indeterminate && poly.contains(p.r, p.x)).map(|p| p.time_s)
                };
                ZoneSummary { element: e, first_zone1_s: first(&z1), first_zone2_s: first(&z2) }
            })
            .collect())
    }

    /// CSV `t,element,R,X,zone,indeterminate`.
    pub fn write_csv<W: Write>(&self, settings: &RelaySettings, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "element", "R", "X", "zone", "indeterminate"])?;
        for p in &self.points {
            let zone = if p.indeterminate { String::new() } else { zone_decision(p, settings)?.to_string() };
            w.write_record([
                format!("{:.9}", p.time_s),
                p.element.to_string(),
                format!("{:.9e}", p.r),
                format!("{:.9e}", p.x),
                zone,
                p.indeterminate.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneSummary {
    pub element: Element,
    pub first_zone1_s: Option<f64>,
    pub first_zone2_s: Option<f64>,
}

/// Filter, decimate to 32 samples per cycle, slide the phasor window and
/// emit the six apparent impedances per decimated step.
pub fn trajectory(rec: &WaveformRecord, settings: &RelaySettings) -> Result<Trajectory> {
    settings.validate()?;
    let volts = rec.voltages.as_ref().ok_or_else(|| Error::invalid("record has no voltage channels"))?;
    let per_cycle = rec.sampling_freq_hz / settings.system_freq_hz;
    let factor = per_cycle / PHASOR_WINDOW as f64;
    if (factor - factor.round()).abs() > 1e-9 || factor.round() < 1.0 {
        return Err(Error::invalid(format!(
            "sampling rate {} Hz is not an integer multiple of {} Hz",
            rec.sampling_freq_hz,
            PHASOR_WINDOW as f64 * settings.system_freq_hz
        )));
    }
    let factor = factor.round() as usize;
    let filt = butterworth_design(settings.filter_order, settings.cutoff_hz, rec.sampling_freq_hz)?;
    let prep = |x: &[f64]| -> Vec<f64> { filt.filter(x).into_iter().step_by(factor).collect() };
    let i: [Vec<f64>; 3] = std::array::from_fn(|k| prep(&rec.samples[k]));
    let v: [Vec<f64>; 3] = std::array::from_fn(|k| prep(&volts[k]));
    let first = PHASOR_WINDOW * (settings.warmup_cycles + 1) - 1;
    let mut points = Vec::new();
    for m in first..i[0].len() {
        let lo = m + 1 - PHASOR_WINDOW;
        let ip: [Complex64; 3] = std::array::from_fn(|k| phasor_estimate(&i[k][lo..=m]).expect("fixed window"));
        let vp: [Complex64; 3] = std::array::from_fn(|k| phasor_estimate(&v[k][lo..=m]).expect("fixed window"));
        points.extend(apparent_impedances(&vp, &ip, settings, rec.time(m * factor)));
    }
    Ok(Trajectory { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synthesize, Bus, FaultType, Position, ScenarioKind, ScenarioSpec, SignalModelParams};
    use proptest::prelude::*;

    fn cycle(f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..PHASOR_WINDOW).map(|n| f(2.0 * PI * n as f64 / PHASOR_WINDOW as f64)).collect()
    }

    #[test]
    fn butterworth_corner_and_dc() {
        let h = butterworth_design(5, 400.0, 7680.0).unwrap();
        let corner = h.magnitude(400.0, 7680.0);
        assert!((corner / std::f64::consts::FRAC_1_SQRT_2 - 1.0).abs() < 0.005, "{corner}");
        assert!((h.magnitude(0.0, 7680.0) - 1.0).abs() < 1e-9);
        let mut last = f64::INFINITY;
        for k in 0..512 {
            let m = h.magnitude(3840.0 * k as f64 / 511.0, 7680.0);
            assert!(m <= last + 1e-12, "not monotone at bin {k}");
            last = m;
        }
        assert!(butterworth_design(5, 3840.0, 7680.0).is_err());
    }

    #[test]
    fn butterworth_matches_reference_coefficients() {
        // scipy.signal.butter(5, 400 / 3840)
        let b = [
            7.202868521348936e-05,
            0.00036014342606744684,
            0.0007202868521348937,
            0.0007202868521348937,
            0.00036014342606744684,
            7.202868521348936e-05,
        ];
        let a =
            [1.0, -3.942333979157603, 6.3073489567434695, -5.106414335005275, 2.0884688692118467, -0.34476459386560704];
        let h = butterworth_design(5, 400.0, 7680.0).unwrap();
        for (x, y) in h.b.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
        for (x, y) in h.a.iter().zip(&a) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn phasor_of_pure_tones() {
        let p = phasor_estimate(&cycle(f64::cos)).unwrap();
        assert!((p.norm() - 1.0).abs() < 1e-9 && p.arg().abs() < 1e-9);
        let q = phasor_estimate(&cycle(f64::sin)).unwrap();
        assert!((q.norm() - 1.0).abs() < 1e-9 && (q.arg() + PI / 2.0).abs() < 1e-9);
        let h = phasor_estimate(&cycle(|w| w.cos() + 0.3 * (3.0 * w).cos())).unwrap();
        assert!((h - p).norm() < 1e-9);
        assert!(phasor_estimate(&[0.0; 31]).is_err());
    }

    #[test]
    fn apparent_impedance_direct_division() {
        let v = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
        let ia = Complex64::from_polar(0.1, -PI / 2.0);
        // b and c cancel a's zero-sequence contribution: I0 = 0
        let i = [ia, -ia / 2.0, -ia / 2.0];
        let pts = apparent_impedances(&v, &i, &RelaySettings::default(), 0.0);
        assert!((pts[0].r - 0.0).abs() < 1e-12 && (pts[0].x - 10.0).abs() < 1e-12);
        assert!(pts[4].indeterminate, "BC with equal currents");
        assert!(pts[4].r.is_nan());
        assert!(zone_decision(&pts[4], &RelaySettings::default()).is_err());
    }

    fn pt(r: f64, x: f64) -> ImpedancePoint {
        ImpedancePoint { element: Element::Ag, r, x, time_s: 0.0, indeterminate: false }
    }

    #[test]
    fn zone_examples() {
        let s = RelaySettings::default();
        assert_eq!(zone_decision(&pt(0.4, 12.0), &s).unwrap(), Zone::Zone1);
        assert_eq!(zone_decision(&pt(0.0, 0.0), &s).unwrap(), Zone::Zone1);
        assert_eq!(zone_decision(&pt(0.0, 30.0), &s).unwrap(), Zone::Zone2);
        assert_eq!(zone_decision(&pt(5.0, 100.0), &s).unwrap(), Zone::Outside);
        assert_eq!(zone_decision(&pt(99.6, 8.7), &s).unwrap(), Zone::Outside);
        assert_eq!(zone_decision(&pt(-3.0, -3.0), &s).unwrap(), Zone::Outside);
    }

    /// Area-sum containment oracle: the point is inside iff the four
    /// triangles it forms with the edges add up to the polygon area.
    fn area_oracle(q: &Quadrilateral, r: f64, x: f64) -> bool {
        let tri = |a: (f64, f64), b: (f64, f64), c: (f64, f64)| {
            ((b.0 - a.0) * (c.1 - a.1) - (c.0 - a.0) * (b.1 - a.1)).abs() / 2.0
        };
        let v = q.vertices;
        let area = tri(v[0], v[1], v[2]) + tri(v[0], v[2], v[3]);
        let sum: f64 = (0..4).map(|k| tri((r, x), v[k], v[(k + 1) % 4])).sum();
        (sum - area).abs() <= 1e-9 * area
    }

    #[test]
    fn containment_matches_area_oracle_on_grid() {
        let s = RelaySettings::default();
        for zone in [Zone::Zone1, Zone::Zone2] {
            let q = s.zone_polygon(zone).unwrap();
            for i in 0..=120 {
                for j in 0..=120 {
                    let (r, x) = (-20.0 + 0.37 * i as f64, -10.0 + 0.41 * j as f64);
                    assert_eq!(q.contains(r, x), area_oracle(&q, r, x), "{zone} at ({r}, {x})");
                }
            }
        }
    }

    #[test]
    fn polygon_geometry() {
        let q = RelaySettings::default().zone_polygon(Zone::Zone1).unwrap();
        let [o, v1, v2, v3] = q.vertices;
        assert_eq!(o, (0.0, 0.0));
        assert!(((v1.1).atan2(v1.0).to_degrees() + 15.0).abs() < 1e-9);
        assert!((v2.1 - 24.0).abs() < 1e-12 && (v3.1 - 24.0).abs() < 1e-12);
        // right blinder parallel to the line
        let line = Complex64::new(1.0, 30.0).arg();
        assert!(((v2.1 - v1.1).atan2(v2.0 - v1.0) - line).abs() < 1e-9);
    }

    fn trace_params(remote_infeed: f64) -> SignalModelParams {
        let mut p = SignalModelParams { with_voltages: true, harmonic_levels: vec![], ..Default::default() };
        p.line.remote_infeed_ratio = remote_infeed;
        p
    }

    fn record(spec: ScenarioSpec, params: &SignalModelParams) -> WaveformRecord {
        synthesize(&spec, params, 8.0).unwrap()
    }

    fn onset(params: &SignalModelParams) -> f64 {
        params.window_start_s + 3.0 / 60.0
    }

    #[test]
    fn prefault_trajectory_sits_at_load_impedance() {
        let params = trace_params(0.0);
        let spec = ScenarioSpec::fault(FaultType::Ag, 0.01, params.window_start_s + 7.9 / 60.0, Position::P5);
        let traj = trajectory(&record(spec, &params), &RelaySettings::default()).unwrap();
        let load = Complex64::from_polar(100.0, 5f64.to_radians());
        let pre: Vec<_> = traj.element(Element::Ag).filter(|p| p.time_s < params.window_start_s + 7.5 / 60.0).collect();
        assert!(pre.len() > 100);
        for p in pre {
            assert!((p.z() - load).norm() / load.norm() < 0.01, "{:?}", p);
        }
    }

    #[test]
    fn bolted_fault_enters_zone1_and_stays() {
        let params = trace_params(0.0);
        let s = RelaySettings::default();
        let spec = ScenarioSpec::fault(FaultType::Ag, 0.01, onset(&params), Position::P5);
        let traj = trajectory(&record(spec, &params), &s).unwrap();
        let summary = traj.summary(&s).unwrap();
        let entry = summary[0].first_zone1_s.expect("AG enters zone 1");
        assert!(entry > onset(&params));
        for p in traj.element(Element::Ag).filter(|p| p.time_s >= entry) {
            assert_eq!(zone_decision(p, &s).unwrap(), Zone::Zone1, "left zone 1 at {}", p.time_s);
        }
        let last = traj.element(Element::Ag).last().unwrap();
        let expect = 0.65 * 30.0;
        assert!((last.x - expect).abs() / expect < 0.1, "X = {}", last.x);
    }

    #[test]
    fn remote_high_resistance_fault_never_enters_zone1() {
        let params = trace_params(8.0);
        let s = RelaySettings::default();
        let spec = ScenarioSpec::fault(FaultType::Ag, 10.0, onset(&params), Position::P5);
        let traj = trajectory(&record(spec, &params), &s).unwrap();
        for sum in traj.summary(&s).unwrap() {
            assert_eq!(sum.first_zone1_s, None, "{}", sum.element);
        }
    }

    #[test]
    fn switching_never_enters_zone1() {
        let params = trace_params(0.0);
        let s = RelaySettings::default();
        let spec = ScenarioSpec::switching(ScenarioKind::CapacitorSwitch, Bus::Bus4, 4, onset(&params));
        let traj = trajectory(&record(spec, &params), &s).unwrap();
        assert!(traj.summary(&s).unwrap().iter().all(|z| z.first_zone1_s.is_none()));
    }

    #[test]
    fn filter_and_decimation_keep_fundamental() {
        let params = trace_params(0.0);
        let spec = ScenarioSpec::fault(FaultType::Ag, 1.0, params.window_start_s + 7.9 / 60.0, Position::P4);
        let rec = record(spec, &params);
        let s = RelaySettings::default();
        let filt = butterworth_design(5, 400.0, 7680.0).unwrap();
        let dec: Vec<f64> = filt.filter(&rec.samples[1]).into_iter().step_by(4).collect();
        let p = phasor_estimate(&dec[5 * 32..6 * 32]).unwrap();
        assert!((p.norm() - 1.0).abs() < 0.01, "{}", p.norm());
        assert!(trajectory(
            &synthesize(
                &ScenarioSpec::fault(FaultType::Ag, 1.0, 9.0, Position::P4),
                &SignalModelParams::default(),
                2.0
            )
            .unwrap(),
            &s
        )
        .is_err());
    }

    #[test]
    fn trajectory_csv_header() {
        let params = trace_params(0.0);
        let spec = ScenarioSpec::fault(FaultType::Ab, 0.01, onset(&params), Position::P4);
        let s = RelaySettings::default();
        let traj = trajectory(&record(spec, &params), &s).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("t,element,R,X,zone,indeterminate"));
        assert_eq!(text.lines().count(), 1 + traj.points.len());
    }

    proptest! {
        #[test]
        fn phasor_is_linear(
            x in prop::collection::vec(-5.0f64..5.0, PHASOR_WINDOW),
            y in prop::collection::vec(-5.0f64..5.0, PHASOR_WINDOW),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = phasor_estimate(&mix).unwrap();
            let rhs = phasor_estimate(&x).unwrap() * a + phasor_estimate(&y).unwrap() * b;
            prop_assert!((lhs - rhs).norm() < 1e-9);
        }

        #[test]
        fn zone1_implies_zone2(r in -40.0f64..60.0, x in -20.0f64..60.0) {
            let s = RelaySettings::default();
            let z1 = s.zone_polygon(Zone::Zone1).unwrap();
            let z2 = s.zone_polygon(Zone::Zone2).unwrap();
            if z1.contains(r, x) {
                prop_assert!(z2.contains(r, x));
            }
        }
    }
}
