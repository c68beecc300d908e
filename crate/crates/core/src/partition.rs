//! Sample-based decomposition of a parameter window into invariancy regions.
//!
//! Grid samples are classified by a [`Signature`]; runs (1-D) or connected
//! components (2-D) of equal signature become linearity regions, varying
//! point-valued samples become nonlinearity regions, and thin or isolated
//! leftovers become transition faces.  Boundaries in 1-D are bracketed by
//! bisection.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cones::Membership;
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::mappings::{
    map_eval, map_membership, probe_directions, recession_direction, theta_extreme, theta_membership, MapOptions,
    MapSample, MapStatus, Side,
};
use crate::model::MpcloInstance;
use crate::solver::SupportValue;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionOptions {
    pub map: MapOptions,
    /// Grid for map-value keys.
    pub quant: f64,
    /// Bracketing accuracy of 1-D transition points.
    pub tol_param: f64,
    /// Affine-dimension threshold relative to the window diameter.
    pub dim_tol_rel: f64,
    /// Ratio between neighbouring difference quotients that flags a
    /// discontinuity inside a nonlinearity region.
    pub cont_factor: f64,
    /// Worker count; 1 is sequential, 0 picks the pool default.
    pub jobs: usize,
    /// Probe extreme points of the representable set (2-D only).
    pub theta_probes: usize,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions {
            map: MapOptions::default(),
            quant: 1e-4,
            tol_param: 1e-6,
            dim_tol_rel: 1e-3,
            cont_factor: 50.0,
            jobs: 0,
            theta_probes: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ThetaClass {
    Interior,
    Boundary,
    Outside,
    Unknown,
}

/// What a sample looks like to the classifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Signature {
    pub theta: ThetaClass,
    /// `None` when classification failed.
    pub map_status: Option<MapStatus>,
    /// Quantized map point, or quantized support profile for sets.
    pub value_key: Vec<i64>,
    pub singleton: bool,
}

/// Marker for an unbounded support value inside a key.
const KEY_INF: i64 = i64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Class {
    Outside,
    Unclassified,
    Point,
    Set,
}

impl Signature {
    fn class(&self) -> Class {
        match (self.theta, self.map_status) {
            (ThetaClass::Outside, _) => Class::Outside,
            (_, Some(MapStatus::Point)) => Class::Point,
            (_, Some(MapStatus::Set)) => Class::Set,
            _ => Class::Unclassified,
        }
    }

    /// Equality used for grouping; the interior/boundary split is ignored.
    fn same_region(&self, other: &Signature) -> bool {
        self.class() == other.class() && self.value_key == other.value_key
    }

    pub fn is_member(&self) -> bool {
        matches!(self.theta, ThetaClass::Interior | ThetaClass::Boundary)
    }
}

/// Agreement of map points needed to join two point-valued samples.
const LINK_TOL: f64 = 1e-6;

/// Two samples belong to the same constant-valued region.  Point values
/// are compared directly so that slowly varying maps are not glued together
/// by the quantization.
fn linked(a: &Sample, b: &Sample) -> bool {
    if !a.signature.same_region(&b.signature) {
        return false;
    }
    if a.signature.class() != Class::Point {
        return true;
    }
    match (a.map_point(), b.map_point()) {
        (Some(p), Some(q)) => (p - q).amax() <= LINK_TOL * (1.0 + p.amax()),
        _ => false,
    }
}

fn quantize(x: f64, quant: f64) -> i64 {
    (x / quant).round() as i64
}

/// A classified parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub point: DVector<f64>,
    pub signature: Signature,
    pub map: Option<MapSample>,
    pub error: Option<String>,
}

impl Sample {
    pub fn map_point(&self) -> Option<&DVector<f64>> {
        self.map.as_ref()?.point.as_ref()
    }
}

fn signature_of(map: &MapSample, quant: f64) -> Signature {
    let theta = match map.theta {
        Membership::Interior { .. } => ThetaClass::Interior,
        Membership::Boundary { .. } => ThetaClass::Boundary,
        Membership::Outside { .. } => ThetaClass::Outside,
    };
    let value_key = match map.status {
        MapStatus::Point => map
            .point
            .as_ref()
            .map(|p| p.iter().map(|&x| quantize(x, quant)).collect())
            .unwrap_or_default(),
        MapStatus::Set => map
            .support
            .iter()
            .map(|s| match s.value {
                SupportValue::Finite(h) => quantize(h, quant),
                SupportValue::Unbounded => KEY_INF,
            })
            .collect(),
        MapStatus::Undefined => Vec::new(),
    };
    Signature {
        theta,
        map_status: Some(map.status),
        value_key,
        singleton: map.status == MapStatus::Point,
    }
}

/// Classify one parameter point; failures become unclassified samples.
pub fn classify_sample(inst: &MpcloInstance, side: Side, point: &DVector<f64>, opts: &PartitionOptions) -> Sample {
    let fail = |theta, msg: String| Sample {
        point: point.clone(),
        signature: Signature {
            theta,
            map_status: None,
            value_key: Vec::new(),
            singleton: false,
        },
        map: None,
        error: Some(msg),
    };
    match map_eval(inst, side, point, &opts.map) {
        Ok(map) => Sample {
            point: point.clone(),
            signature: signature_of(&map, opts.quant),
            map: Some(map),
            error: None,
        },
        Err(Error::OutsideTheta) => Sample {
            point: point.clone(),
            signature: Signature {
                theta: ThetaClass::Outside,
                map_status: None,
                value_key: Vec::new(),
                singleton: false,
            },
            map: None,
            error: None,
        },
        Err(e) => {
            // keep the membership verdict when only the map failed
            let theta = match theta_membership(inst, side, point, &opts.map.solver) {
                Ok(t) if t.is_member() => match t.status {
                    Membership::Interior { .. } => ThetaClass::Interior,
                    _ => ThetaClass::Boundary,
                },
                Ok(_) => ThetaClass::Outside,
                Err(_) => ThetaClass::Unknown,
            };
            fail(theta, e.to_string())
        }
    }
}

/// Axis-aligned parameter window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub axes: Vec<(f64, f64)>,
}

impl Window {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Window { axes: vec![(lo, hi)] }
    }

    pub fn rect(x: (f64, f64), y: (f64, f64)) -> Self {
        Window { axes: vec![x, y] }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn diameter(&self) -> f64 {
        self.axes.iter().map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
    }

    /// Grid coordinate `i` of `n` along axis `k`.
    pub fn coord(&self, k: usize, i: usize, n: usize) -> f64 {
        let (a, b) = self.axes[k];
        a + (b - a) * i as f64 / (n - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionKind {
    Linearity,
    Nonlinearity,
    TransitionFace(usize),
    OutsideTheta,
    Unclassified,
}

impl RegionKind {
    pub fn name(&self) -> String {
        match self {
            RegionKind::Linearity => "linearity".into(),
            RegionKind::Nonlinearity => "nonlinearity".into(),
            RegionKind::TransitionFace(d) => format!("transition{d}"),
            RegionKind::OutsideTheta => "outside".into(),
            RegionKind::Unclassified => "unclassified".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: usize,
    pub kind: RegionKind,
    /// Indices into the decomposition's sample list.
    pub samples: Vec<usize>,
    pub bbox: Vec<(f64, f64)>,
    /// Refined extent for 1-D regions; infinite ends mark recession.
    #[serde(with = "crate::serde_float::pair_opt")]
    pub interval: Option<(f64, f64)>,
    pub key: Option<Vec<i64>>,
    pub representative: Option<usize>,
    /// Unit directions (window-edge normals) along which the region recedes.
    pub recession: Vec<DVector<f64>>,
    pub note: Option<String>,
}

/// A bracketed boundary between two 1-D regions, or a located 2-D point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub point: DVector<f64>,
    /// Width of the final bracket.
    pub bracket: f64,
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub sample: Option<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDecomposition {
    pub side: Side,
    pub window: Window,
    pub grid: Vec<usize>,
    pub samples: Vec<Sample>,
    pub regions: Vec<Region>,
    pub transitions: Vec<Transition>,
    pub notes: Vec<String>,
}

impl RegionDecomposition {
    /// A decomposition with no samples, for windows that miss the set.
    pub fn empty(side: Side, window: &Window, grid: &[usize]) -> Self {
        RegionDecomposition {
            side,
            window: window.clone(),
            grid: grid.to_vec(),
            samples: Vec::new(),
            regions: Vec::new(),
            transitions: Vec::new(),
            notes: vec!["window lies outside the representable set".into()],
        }
    }

    pub fn regions_of(&self, kind: RegionKind) -> impl Iterator<Item = &Region> {
        self.regions.iter().filter(move |r| r.kind == kind)
    }

    /// Map point of a region's representative sample.
    pub fn image(&self, region: &Region) -> Option<DVector<f64>> {
        let s = &self.samples[region.representative?];
        s.map.as_ref()?.point.clone()
    }

    pub fn region_of_sample(&self, idx: usize) -> Option<&Region> {
        self.regions.iter().find(|r| r.samples.contains(&idx))
    }
}

fn bbox(points: &[&DVector<f64>]) -> Vec<(f64, f64)> {
    let r = points.first().map_or(0, |p| p.len());
    (0..r)
        .map(|k| {
            points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[k]), hi.max(p[k]))
            })
        })
        .collect()
}

/// Number of principal standard deviations above `tol`.
pub fn affine_dimension(points: &[&DVector<f64>], tol: f64) -> usize {
    let n = points.len();
    if n < 2 {
        return 0;
    }
    let r = points[0].len();
    let mut mean = DVector::zeros(r);
    for p in points {
        mean += *p;
    }
    mean /= n as f64;
    let mut x = DMatrix::zeros(n, r);
    for (i, p) in points.iter().enumerate() {
        x.row_mut(i).copy_from(&(*p - &mean).transpose());
    }
    let sv = x.singular_values();
    let scale = (n as f64).sqrt();
    sv.iter().filter(|&&s| s / scale > tol).count()
}

/// Decompose `window` on the given side.
pub fn decompose(
    inst: &MpcloInstance,
    side: Side,
    window: &Window,
    grid: &[usize],
    opts: &PartitionOptions,
) -> Result<RegionDecomposition> {
    let r = inst.r();
    if r != window.dim() || !(1..=2).contains(&r) {
        return Err(Error::UnsupportedDimension(r));
    }
    if grid.len() != r || grid.iter().any(|&n| n < 3) {
        return Err(Error::Validation("grid needs at least 3 points per axis".into()));
    }
    if window.axes.iter().any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
        return Err(Error::Validation("window bounds must be finite and increasing".into()));
    }
    let points: Vec<DVector<f64>> = if r == 1 {
        (0..grid[0])
            .map(|i| DVector::from_element(1, window.coord(0, i, grid[0])))
            .collect()
    } else {
        // row-major: index = j * nx + i, x along axis 0
        let (nx, ny) = (grid[0], grid[1]);
        (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .map(|(i, j)| DVector::from_column_slice(&[window.coord(0, i, nx), window.coord(1, j, ny)]))
            .collect()
    };
    let samples = par_map(&points, opts.jobs, |p| classify_sample(inst, side, p, opts));
    if !samples.iter().any(|s| s.signature.is_member()) {
        return Err(Error::WindowOutsideTheta);
    }
    let mut dec = RegionDecomposition {
        side,
        window: window.clone(),
        grid: grid.to_vec(),
        samples,
        regions: Vec::new(),
        transitions: Vec::new(),
        notes: Vec::new(),
    };
    if r == 1 {
        decompose_1d(inst, &mut dec, opts);
    } else {
        decompose_2d(inst, &mut dec, opts);
    }
    mark_recession(inst, &mut dec, opts);
    for (i, reg) in dec.regions.iter_mut().enumerate() {
        reg.id = i;
    }
    Ok(dec)
}

fn new_region(kind: RegionKind, samples: Vec<usize>, all: &[Sample]) -> Region {
    let pts: Vec<&DVector<f64>> = samples.iter().map(|&i| &all[i].point).collect();
    let key = match kind {
        RegionKind::Linearity => samples.first().map(|&i| all[i].signature.value_key.clone()),
        _ => None,
    };
    // representative: the middle member sample with a map value
    let with_map: Vec<usize> = samples.iter().copied().filter(|&i| all[i].map.is_some()).collect();
    let representative = with_map.get(with_map.len() / 2).copied();
    Region {
        id: 0,
        kind,
        bbox: bbox(&pts),
        samples,
        interval: None,
        key,
        representative,
        recession: Vec::new(),
        note: None,
    }
}

// ---- one parameter ----

#[derive(Debug, Clone)]
struct Run {
    kind: RegionKind,
    start: usize,
    end: usize, // inclusive
}

fn runs_1d(samples: &[Sample]) -> Vec<Run> {
    let n = samples.len();
    // maximal runs of equal signature
    let mut raw: Vec<(usize, usize)> = Vec::new();
    let mut s = 0;
    for i in 1..=n {
        if i == n || !linked(&samples[i - 1], &samples[i]) {
            raw.push((s, i - 1));
            s = i;
        }
    }
    let mut out: Vec<Run> = Vec::new();
    for (a, b) in raw {
        let sig = &samples[a].signature;
        let kind = match sig.class() {
            Class::Outside => RegionKind::OutsideTheta,
            Class::Unclassified => RegionKind::Unclassified,
            Class::Point if b > a => RegionKind::Linearity,
            Class::Point => RegionKind::Nonlinearity,
            Class::Set if b > a => RegionKind::Linearity,
            Class::Set => RegionKind::TransitionFace(0),
        };
        if let Some(last) = out.last_mut() {
            let merge = last.kind == kind && matches!(kind, RegionKind::Nonlinearity | RegionKind::OutsideTheta | RegionKind::Unclassified);
            if merge {
                last.end = b;
                continue;
            }
        }
        out.push(Run { kind, start: a, end: b });
    }
    out
}

/// Find the boundary between two samples whose signatures differ: the
/// returned bracket `[lo, hi]` has `lo` looking like the left side.
fn bisect(
    inst: &MpcloInstance,
    side: Side,
    mut lo: f64,
    mut hi: f64,
    left: &Signature,
    right: &Signature,
    left_kind: RegionKind,
    right_kind: RegionKind,
    opts: &PartitionOptions,
) -> (f64, f64) {
    let looks_left = |s: &Signature| -> bool {
        if left_kind == RegionKind::Linearity || left_kind == RegionKind::TransitionFace(0) {
            return s.same_region(left);
        }
        if right_kind == RegionKind::Linearity || right_kind == RegionKind::TransitionFace(0) {
            return !s.same_region(right);
        }
        s.class() == left.class()
    };
    while hi - lo > opts.tol_param {
        let mid = 0.5 * (lo + hi);
        let s = classify_sample(inst, side, &DVector::from_element(1, mid), opts);
        if looks_left(&s.signature) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

fn decompose_1d(inst: &MpcloInstance, dec: &mut RegionDecomposition, opts: &PartitionOptions) {
    let side = dec.side;
    let runs = runs_1d(&dec.samples);
    for run in &runs {
        let idx: Vec<usize> = (run.start..=run.end).collect();
        dec.regions.push(new_region(run.kind, idx, &dec.samples));
    }
    // bracket every boundary between consecutive runs
    let pairs: Vec<usize> = (0..runs.len().saturating_sub(1)).collect();
    let brackets = par_map(&pairs, opts.jobs, |&k| {
        let (a, b) = (&runs[k], &runs[k + 1]);
        let (sa, sb) = (&dec.samples[a.end], &dec.samples[b.start]);
        if b.kind == RegionKind::TransitionFace(0) {
            // the sampled locus itself; it separates its two neighbours
            let right = if k + 2 < runs.len() { k + 2 } else { k + 1 };
            return Transition {
                point: sb.point.clone(),
                bracket: 0.0,
                left: Some(k),
                right: Some(right),
                sample: None,
            };
        }
        let (lo, hi) = if a.kind == RegionKind::TransitionFace(0) {
            (sa.point[0], sa.point[0])
        } else {
            bisect(inst, side, sa.point[0], sb.point[0], &sa.signature, &sb.signature, a.kind, b.kind, opts)
        };
        let at = 0.5 * (lo + hi);
        let sample = (lo != hi).then(|| classify_sample(inst, side, &DVector::from_element(1, at), opts));
        Transition {
            point: DVector::from_element(1, at),
            bracket: hi - lo,
            left: Some(k),
            right: Some(k + 1),
            sample,
        }
    });
    // refined intervals
    let w = &dec.window.axes[0];
    for (k, reg) in dec.regions.iter_mut().enumerate() {
        let lo = if k == 0 { w.0 } else { brackets[k - 1].point[0] };
        let hi = if k + 1 == runs.len() { w.1 } else { brackets[k].point[0] };
        reg.interval = Some((lo, hi));
    }
    continuity_1d(dec, opts);
    // a sampled locus already produced its transition
    dec.transitions = brackets
        .into_iter()
        .enumerate()
        .filter(|(k, _)| runs[*k].kind != RegionKind::TransitionFace(0))
        .map(|(_, t)| t)
        .collect();
}

fn continuity_1d(dec: &mut RegionDecomposition, opts: &PartitionOptions) {
    let samples = &dec.samples;
    for reg in dec.regions.iter_mut().filter(|r| r.kind == RegionKind::Nonlinearity) {
        let vals: Vec<f64> = reg
            .samples
            .iter()
            .filter_map(|&i| samples[i].map.as_ref()?.point.as_ref().map(|p| p[0]))
            .collect();
        let diffs: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let allowance = 4.0 * opts.quant;
        let bad = (0..diffs.len()).find(|&i| {
            let left = if i > 0 { diffs[i - 1] } else { 0.0 };
            let right = diffs.get(i + 1).copied().unwrap_or(0.0);
            let local = left.max(right);
            diffs[i] > opts.cont_factor * local + allowance && (i > 0 && i + 1 < diffs.len())
        });
        if let Some(i) = bad {
            reg.kind = RegionKind::Unclassified;
            reg.note = Some(format!("map jumps between samples {} and {}", reg.samples[i], reg.samples[i + 1]));
        }
    }
}

// ---- two parameters ----

fn neighbours(idx: usize, nx: usize, ny: usize, eight: bool) -> Vec<usize> {
    let (i, j) = ((idx % nx) as i64, (idx / nx) as i64);
    let mut out = Vec::with_capacity(8);
    for dj in -1i64..=1 {
        for di in -1i64..=1 {
            if (di == 0 && dj == 0) || (!eight && di != 0 && dj != 0) {
                continue;
            }
            let (a, b) = (i + di, j + dj);
            if a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < ny {
                out.push(b as usize * nx + a as usize);
            }
        }
    }
    out
}

/// Connected components of `members` under `linked`.
fn components(
    members: &[usize],
    nx: usize,
    ny: usize,
    eight: bool,
    linked: impl Fn(usize, usize) -> bool,
) -> Vec<Vec<usize>> {
    let mut in_set = vec![false; nx * ny];
    for &m in members {
        in_set[m] = true;
    }
    let mut seen = vec![false; nx * ny];
    let mut out = Vec::new();
    for &m in members {
        if seen[m] {
            continue;
        }
        seen[m] = true;
        let mut comp = vec![m];
        let mut queue = VecDeque::from([m]);
        while let Some(a) = queue.pop_front() {
            for b in neighbours(a, nx, ny, eight) {
                if in_set[b] && !seen[b] && linked(a, b) {
                    seen[b] = true;
                    comp.push(b);
                    queue.push_back(b);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

fn decompose_2d(inst: &MpcloInstance, dec: &mut RegionDecomposition, opts: &PartitionOptions) {
    let (nx, ny) = (dec.grid[0], dec.grid[1]);
    let n = nx * ny;
    let dim_tol = opts.dim_tol_rel * dec.window.diameter();
    let class: Vec<Class> = dec.samples.iter().map(|s| s.signature.class()).collect();
    let by_class = |c: Class| -> Vec<usize> { (0..n).filter(|&i| class[i] == c).collect() };
    let mut assigned = vec![false; n];
    let mut regions: Vec<Region> = Vec::new();

    for comp in components(&by_class(Class::Outside), nx, ny, true, |_, _| true) {
        comp.iter().for_each(|&i| assigned[i] = true);
        regions.push(new_region(RegionKind::OutsideTheta, comp, &dec.samples));
    }
    for comp in components(&by_class(Class::Unclassified), nx, ny, true, |_, _| true) {
        comp.iter().for_each(|&i| assigned[i] = true);
        let note = comp.iter().find_map(|&i| dec.samples[i].error.clone());
        let mut reg = new_region(RegionKind::Unclassified, comp, &dec.samples);
        reg.note = note;
        regions.push(reg);
    }

    // constant-key components
    let valued: Vec<usize> = (0..n).filter(|&i| matches!(class[i], Class::Point | Class::Set)).collect();
    let same = |a: usize, b: usize| linked(&dec.samples[a], &dec.samples[b]);
    for comp in components(&valued, nx, ny, true, same) {
        if comp.len() < 2 {
            continue;
        }
        let pts: Vec<&DVector<f64>> = comp.iter().map(|&i| &dec.samples[i].point).collect();
        let d = affine_dimension(&pts, dim_tol);
        comp.iter().for_each(|&i| assigned[i] = true);
        let kind = if d >= 2 {
            RegionKind::Linearity
        } else {
            RegionKind::TransitionFace(d)
        };
        regions.push(new_region(kind, comp, &dec.samples));
    }

    // varying point values
    let loose_points: Vec<usize> = (0..n).filter(|&i| !assigned[i] && class[i] == Class::Point).collect();
    // 4-connected so a one-cell transition line still separates its sides;
    // strips thinner than a cell only connect diagonally, so fragments
    // below full dimension may also join across corners
    let mut thin = vec![false; n];
    for comp in components(&loose_points, nx, ny, false, |_, _| true) {
        let pts: Vec<&DVector<f64>> = comp.iter().map(|&i| &dec.samples[i].point).collect();
        if affine_dimension(&pts, dim_tol) < 2 {
            comp.iter().for_each(|&i| thin[i] = true);
        }
    }
    let edge_ok = |a: usize, b: usize| a.abs_diff(b) == 1 || a.abs_diff(b) == nx || thin[a] || thin[b];
    for comp in components(&loose_points, nx, ny, true, edge_ok) {
        comp.iter().for_each(|&i| assigned[i] = true);
        regions.push(new_region(RegionKind::Nonlinearity, comp, &dec.samples));
    }

    // varying set values
    let loose_sets: Vec<usize> = (0..n).filter(|&i| !assigned[i] && class[i] == Class::Set).collect();
    for comp in components(&loose_sets, nx, ny, true, |_, _| true) {
        let pts: Vec<&DVector<f64>> = comp.iter().map(|&i| &dec.samples[i].point).collect();
        let d = affine_dimension(&pts, dim_tol);
        comp.iter().for_each(|&i| assigned[i] = true);
        let mut reg = new_region(
            if d >= 2 {
                RegionKind::Unclassified
            } else {
                RegionKind::TransitionFace(d)
            },
            comp,
            &dec.samples,
        );
        if d >= 2 {
            reg.note = Some("two-dimensional patch of varying set values".into());
        }
        regions.push(reg);
    }
    dec.regions = regions;
    continuity_2d(dec, opts);
    probe_theta_extremes(inst, dec, opts);
}

fn continuity_2d(dec: &mut RegionDecomposition, opts: &PartitionOptions) {
    let (nx, ny) = (dec.grid[0], dec.grid[1]);
    let samples = &dec.samples;
    let point = |i: usize| samples[i].map.as_ref().and_then(|m| m.point.clone());
    for reg in dec.regions.iter_mut().filter(|r| r.kind == RegionKind::Nonlinearity) {
        let set: std::collections::BTreeSet<usize> = reg.samples.iter().copied().collect();
        let diff = |a: usize, b: usize| -> Option<f64> { Some((point(a)? - point(b)?).amax()) };
        let mut bad = None;
        'outer: for &a in &reg.samples {
            for b in neighbours(a, nx, ny, false).into_iter().filter(|b| *b > a && set.contains(b)) {
                let Some(dab) = diff(a, b) else { continue };
                // neighbouring differences on either end
                let mut local: f64 = 0.0;
                let mut count = 0;
                for (p, skip) in [(a, b), (b, a)] {
                    for c in neighbours(p, nx, ny, false).into_iter().filter(|c| *c != skip && set.contains(c)) {
                        if let Some(x) = diff(p, c) {
                            local = local.max(x);
                            count += 1;
                        }
                    }
                }
                if count >= 2 && dab > opts.cont_factor * local + 4.0 * opts.quant {
                    bad = Some((a, b));
                    break 'outer;
                }
            }
        }
        if let Some((a, b)) = bad {
            reg.kind = RegionKind::Unclassified;
            reg.note = Some(format!("map jumps between samples {a} and {b}"));
        }
    }
}

/// Classify maximizers of `⟨g, ·⟩` over the representable set; set-valued
/// ones are extreme transition points that a grid almost never hits.
fn probe_theta_extremes(inst: &MpcloInstance, dec: &mut RegionDecomposition, opts: &PartitionOptions) {
    if opts.theta_probes == 0 {
        return;
    }
    let side = dec.side;
    let dirs = probe_directions(2, opts.theta_probes);
    let found = par_map(&dirs, opts.jobs, |g| -> Option<Sample> {
        let p = theta_extreme(inst, side, g, &opts.map.solver).ok()??;
        let inside = dec
            .window
            .axes
            .iter()
            .enumerate()
            .all(|(k, (a, b))| p[k] >= *a && p[k] <= *b);
        if !inside {
            return None;
        }
        let s = classify_sample(inst, side, &p, opts);
        (s.signature.class() == Class::Set).then_some(s)
    });
    let spacing = dec
        .window
        .axes
        .iter()
        .zip(&dec.grid)
        .map(|((a, b), &n)| (b - a) / (n - 1) as f64)
        .fold(0.0, f64::max);
    for s in found.into_iter().flatten() {
        let dup = dec.transitions.iter().any(|t| (&t.point - &s.point).amax() <= 1e-6 * (1.0 + spacing));
        if dup {
            continue;
        }
        dec.transitions.push(Transition {
            point: s.point.clone(),
            bracket: 0.0,
            left: None,
            right: None,
            sample: None,
        });
        dec.samples.push(s);
        let idx = dec.samples.len() - 1;
        let mut reg = new_region(RegionKind::TransitionFace(0), vec![idx], &dec.samples);
        reg.note = Some("extreme point of the representable set".into());
        dec.regions.push(reg);
    }
    // grid-level isolated transition points are located too
    for reg in &dec.regions {
        if reg.kind == RegionKind::TransitionFace(0) && reg.samples.len() == 1 && reg.samples[0] < dec.grid.iter().product() {
            let p = dec.samples[reg.samples[0]].point.clone();
            dec.transitions.push(Transition {
                point: p,
                bracket: 0.0,
                left: None,
                right: None,
                sample: None,
            });
        }
    }
}

/// Flag regions that reach a window edge along a recession direction of
/// the representable set.
fn mark_recession(inst: &MpcloInstance, dec: &mut RegionDecomposition, opts: &PartitionOptions) {
    let r = dec.window.dim();
    let mut cache: BTreeMap<(usize, bool), bool> = BTreeMap::new();
    let tol = 1e-12;
    for reg in dec.regions.iter_mut() {
        if matches!(reg.kind, RegionKind::OutsideTheta | RegionKind::Unclassified) {
            continue;
        }
        for k in 0..r {
            let (a, b) = dec.window.axes[k];
            for (upper, edge) in [(false, a), (true, b)] {
                let touches = if upper {
                    reg.bbox[k].1 >= edge - tol
                } else {
                    reg.bbox[k].0 <= edge + tol
                };
                if !touches {
                    continue;
                }
                let mut h = DVector::zeros(r);
                h[k] = if upper { 1.0 } else { -1.0 };
                let recedes = *cache.entry((k, upper)).or_insert_with(|| {
                    recession_direction(inst, dec.side, &h, &opts.map.solver)
                        .map(|x| x.recedes)
                        .unwrap_or(false)
                });
                if recedes {
                    if let Some((lo, hi)) = reg.interval.as_mut() {
                        if upper {
                            *hi = f64::INFINITY;
                        } else {
                            *lo = f64::NEG_INFINITY;
                        }
                    }
                    reg.recession.push(h);
                }
            }
        }
    }
}

// ---- verification ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub name: String,
    pub pass: bool,
    pub tested: usize,
    pub witnesses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub checks: Vec<TheoremCheck>,
}

impl TheoremReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&TheoremCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &str, tested: usize, failures: Vec<String>, notes: Vec<String>) -> TheoremCheck {
    let pass = failures.is_empty();
    TheoremCheck {
        name: name.into(),
        pass,
        tested,
        witnesses: if pass { notes } else { failures },
    }
}

/// Spread `k` indices over `0..n`.
fn spread(n: usize, k: usize) -> Vec<usize> {
    if n <= k {
        return (0..n).collect();
    }
    (0..k).map(|i| i * (n - 1) / (k - 1).max(1)).collect()
}

fn fmt_point(p: &DVector<f64>) -> String {
    let parts: Vec<String> = p.iter().map(|x| format!("{x:.9}")).collect();
    format!("({})", parts.join(","))
}

/// Structural checks on a decomposition:
/// (a) regions are disjoint on samples;
/// (b) linearity regions are convex at sample level;
/// (c) nonlinearity maps onto nonlinearity and inverts;
/// (d) the map at a meeting point of two linearity regions contains the
///     segment between their images;
/// (e) images of receding linearity regions are set-valued on the other side.
pub fn verify_decomposition(inst: &MpcloInstance, dec: &RegionDecomposition, opts: &PartitionOptions) -> TheoremReport {
    let side = dec.side;
    let mut checks = Vec::new();

    // (a)
    let mut owner = vec![usize::MAX; dec.samples.len()];
    let mut fails = Vec::new();
    for reg in &dec.regions {
        for &i in &reg.samples {
            if owner[i] != usize::MAX {
                fails.push(format!("sample {i} in regions {} and {}", owner[i], reg.id));
            }
            owner[i] = reg.id;
        }
    }
    let uncovered = owner.iter().filter(|&&o| o == usize::MAX).count();
    if uncovered > 0 {
        fails.push(format!("{uncovered} samples in no region"));
    }
    checks.push(check("a_disjoint", dec.samples.len(), fails, Vec::new()));

    // (b)
    let mut jobs = Vec::new();
    for reg in dec.regions_of(RegionKind::Linearity) {
        let idx = spread(reg.samples.len(), 4);
        for (x, &a) in idx.iter().enumerate() {
            for &b in &idx[x + 1..] {
                let (pa, pb) = (&dec.samples[reg.samples[a]].point, &dec.samples[reg.samples[b]].point);
                jobs.push((reg.id, (pa + pb) * 0.5, reg.samples[a]));
            }
        }
    }
    let results = par_map(&jobs, opts.jobs, |(_, mid, _)| classify_sample(inst, side, mid, opts));
    let mut fails = Vec::new();
    for ((id, mid, from), s) in jobs.iter().zip(&results) {
        if !s.signature.same_region(&dec.samples[*from].signature) {
            fails.push(format!("region {id}: midpoint {} leaves the region", fmt_point(mid)));
        }
    }
    checks.push(check("b_convexity", jobs.len(), fails, Vec::new()));

    // (c)
    let mut pts = Vec::new();
    for reg in dec.regions_of(RegionKind::Nonlinearity) {
        for k in spread(reg.samples.len(), 3) {
            let s = &dec.samples[reg.samples[k]];
            if let Some(img) = s.map.as_ref().and_then(|m| m.point.clone()) {
                pts.push((reg.id, s.point.clone(), img));
            }
        }
    }
    let results = par_map(&pts, opts.jobs, |(_, at, img)| {
        let back = classify_sample(inst, side.other(), img, opts);
        let inv = map_membership(inst, side.other(), img, at, &opts.map);
        (back, inv)
    });
    let mut fails = Vec::new();
    for ((id, at, img), (back, inv)) in pts.iter().zip(&results) {
        if back.signature.class() != Class::Point {
            fails.push(format!("region {id}: image {} of {} is not a single point", fmt_point(img), fmt_point(at)));
        } else if !matches!(inv, Ok(m) if m.member) {
            fails.push(format!("region {id}: {} not recovered from image {}", fmt_point(at), fmt_point(img)));
        }
    }
    checks.push(check("c_nonlinearity_duality", pts.len(), fails, Vec::new()));

    // (d)
    let meets = meeting_points(dec);
    let results = par_map(&meets, opts.jobs, |(at, a, b)| {
        let mid = (a + b) * 0.5;
        map_membership(inst, side, at, &mid, &opts.map)
    });
    let mut fails = Vec::new();
    let mut notes = Vec::new();
    for ((at, a, b), res) in meets.iter().zip(&results) {
        let line = format!("at {}: segment {} to {}", fmt_point(at), fmt_point(a), fmt_point(b));
        match res {
            Ok(m) if m.member => notes.push(line),
            Ok(m) => fails.push(format!("{line}, midpoint residual {:.3e}", m.residual)),
            Err(e) => fails.push(format!("{line}: {e}")),
        }
    }
    checks.push(check("d_closure_segment", meets.len(), fails, notes));

    // (e)
    let mut imgs = Vec::new();
    for reg in dec.regions_of(RegionKind::Linearity) {
        if reg.recession.is_empty() {
            continue;
        }
        if let Some(img) = dec.image(reg) {
            let far: Vec<DVector<f64>> = [0, reg.samples.len() - 1]
                .iter()
                .map(|&k| dec.samples[reg.samples[k]].point.clone())
                .collect();
            imgs.push((reg.id, img, far));
        }
    }
    let results = par_map(&imgs, opts.jobs, |(_, img, far)| {
        let s = classify_sample(inst, side.other(), img, opts);
        // the inverse map at the image holds the whole region, so two of its
        // points also certify a set value when the image sits on a kink
        let held = s.signature.class() != Class::Set
            && far.iter().all(|u| matches!(map_membership(inst, side.other(), img, u, &opts.map), Ok(m) if m.member));
        (s, held)
    });
    let mut fails = Vec::new();
    let mut notes = Vec::new();
    for ((id, img, _), (s, held)) in imgs.iter().zip(&results) {
        if s.signature.class() == Class::Set {
            continue;
        }
        if *held {
            notes.push(format!("region {id}: set value at {} certified by inverse membership", fmt_point(img)));
        } else {
            fails.push(format!("region {id}: image {} is not set-valued on the other side", fmt_point(img)));
        }
    }
    checks.push(check("e_recession_transition", imgs.len(), fails, notes));

    TheoremReport { checks }
}

/// Transition loci with the images of two linearity regions meeting there.
fn meeting_points(dec: &RegionDecomposition) -> Vec<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let mut out = Vec::new();
    if dec.window.dim() == 1 {
        for t in &dec.transitions {
            let (Some(l), Some(r)) = (t.left, t.right) else { continue };
            let (a, b) = (&dec.regions[l], &dec.regions[r]);
            if a.kind == RegionKind::Linearity && b.kind == RegionKind::Linearity {
                if let (Some(ia), Some(ib)) = (dec.image(a), dec.image(b)) {
                    out.push((t.point.clone(), ia, ib));
                }
            }
        }
        return out;
    }
    let spacing = dec
        .window
        .axes
        .iter()
        .zip(&dec.grid)
        .map(|((a, b), &n)| (b - a) / (n - 1) as f64)
        .fold(0.0, f64::max);
    let reach = 2.0 * spacing;
    let lin: Vec<&Region> = dec.regions_of(RegionKind::Linearity).collect();
    for reg in dec.regions_of(RegionKind::TransitionFace(0)) {
        let sample = &dec.samples[reg.samples[0]];
        let Some(map) = sample.map.as_ref().filter(|m| m.status == MapStatus::Set) else { continue };
        let at = &sample.point;
        // only images the sampled set actually reaches
        let inside = |img: &DVector<f64>| {
            let tol = 1e-4 * (1.0 + img.amax());
            map.support.iter().all(|p| match p.value {
                SupportValue::Finite(h) => p.direction.dot(img) <= h + tol,
                _ => true,
            })
        };
        let near: Vec<(&Region, DVector<f64>)> = lin
            .iter()
            .filter(|l| l.samples.iter().any(|&i| (&dec.samples[i].point - at).amax() <= reach))
            .filter_map(|l| dec.image(l).map(|img| (*l, img)))
            .filter(|(_, img)| inside(img))
            .collect();
        for (x, (_, ia)) in near.iter().enumerate() {
            for (_, ib) in &near[x + 1..] {
                out.push((at.clone(), ia.clone(), ib.clone()));
            }
        }
    }
    out
}
