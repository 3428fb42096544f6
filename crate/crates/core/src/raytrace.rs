//! Exact specular paths by the image method.
//!
//! Every facet in the scene is axis-aligned (ground plane, building walls and
//! roofs), so mirroring and plane intersection reduce to per-coordinate
//! arithmetic. Candidate paths are validated by a forward occlusion test:
//! building interiors and tree trunks block, canopies attenuate.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;

use crate::scene::{Scene, Tree};
use crate::SPEED_OF_LIGHT;

/// Segments grazing a facet within this distance are not blocked.
pub const OCCLUSION_TOLERANCE: f64 = 1e-6;

/// Endpoints are lifted to at least this altitude.
pub const MIN_ENDPOINT_HEIGHT: f64 = 0.5;

/// Default reflection cap.
pub const DEFAULT_MAX_REFLECTIONS: usize = 2;

type P3 = [f64; 3];

fn sub(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: P3, b: P3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: P3) -> f64 {
    dot(a, a).sqrt()
}

fn unit(a: P3) -> P3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

fn angles(d: P3) -> (f64, f64) {
    (d[1].atan2(d[0]), d[2].clamp(-1.0, 1.0).asin())
}

fn direction(az: f64, el: f64) -> P3 {
    [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    /// Electric field perpendicular to the plane of incidence.
    TE,
    /// Electric field in the plane of incidence.
    TM,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FacetKind {
    Ground,
    Wall,
    Roof,
}

impl FacetKind {
    /// Vertically oriented elements: TM off horizontal surfaces, TE off walls.
    pub fn polarization(self) -> Polarization {
        match self {
            FacetKind::Ground | FacetKind::Roof => Polarization::TM,
            FacetKind::Wall => Polarization::TE,
        }
    }
}

/// Axis-aligned planar reflector: the plane `coord[axis] = value`, facing
/// `normal_sign` along that axis, bounded in the other two coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub kind: FacetKind,
    pub axis: usize,
    pub value: f64,
    pub normal_sign: f64,
    pub lo: P3,
    pub hi: P3,
    pub material: usize,
}

impl Facet {
    pub fn normal(&self) -> P3 {
        let mut n = [0.0; 3];
        n[self.axis] = self.normal_sign;
        n
    }

    fn signed_distance(&self, p: P3) -> f64 {
        self.normal_sign * (p[self.axis] - self.value)
    }

    fn mirror(&self, p: P3) -> P3 {
        let mut m = p;
        m[self.axis] = 2.0 * self.value - p[self.axis];
        m
    }

    fn contains(&self, p: P3) -> bool {
        const EPS: f64 = 1e-9;
        (0..3)
            .filter(|&k| k != self.axis)
            .all(|k| p[k] >= self.lo[k] - EPS && p[k] <= self.hi[k] + EPS)
    }

    /// Intersection of the segment `from → to` with the facet plane.
    fn hit(&self, from: P3, to: P3) -> Option<P3> {
        let denom = to[self.axis] - from[self.axis];
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.value - from[self.axis]) / denom;
        if !(t > 1e-12 && t < 1.0 - 1e-12) {
            return None;
        }
        let mut p = [
            from[0] + t * (to[0] - from[0]),
            from[1] + t * (to[1] - from[1]),
            from[2] + t * (to[2] - from[2]),
        ];
        p[self.axis] = self.value;
        self.contains(p).then_some(p)
    }
}

/// All reflecting facets of the scene: ground first, then five per building.
pub fn scene_facets(scene: &Scene) -> Vec<Facet> {
    let mut facets = Vec::with_capacity(1 + 5 * scene.buildings.len());
    if let Some(material) = scene.ground_material {
        facets.push(Facet {
            kind: FacetKind::Ground,
            axis: 2,
            value: 0.0,
            normal_sign: 1.0,
            lo: [f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0],
            hi: [f64::INFINITY, f64::INFINITY, 0.0],
            material,
        });
    }
    for b in &scene.buildings {
        let r = b.footprint;
        let (x0, x1, y0, y1) = (r.x, r.x + r.w, r.y, r.y + r.h);
        let lo = [x0, y0, 0.0];
        let hi = [x1, y1, b.height];
        let wall = |axis: usize, value: f64, normal_sign: f64| Facet {
            kind: FacetKind::Wall,
            axis,
            value,
            normal_sign,
            lo,
            hi,
            material: b.material,
        };
        facets.push(wall(0, x0, -1.0));
        facets.push(wall(0, x1, 1.0));
        facets.push(wall(1, y0, -1.0));
        facets.push(wall(1, y1, 1.0));
        facets.push(Facet {
            kind: FacetKind::Roof,
            axis: 2,
            value: b.height,
            normal_sign: 1.0,
            lo,
            hi,
            material: b.material,
        });
    }
    facets
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    LoS,
    Reflected(u8),
}

impl PathKind {
    pub fn order(self) -> usize {
        match self {
            PathKind::LoS => 0,
            PathKind::Reflected(n) => n as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reflection {
    pub point: P3,
    pub facet: FacetKind,
    pub material: usize,
    /// Angle from the facet normal, radians.
    pub incidence_angle: f64,
    pub polarization: Polarization,
    pub coefficient: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayPath {
    pub kind: PathKind,
    /// tx, reflection points..., rx.
    pub vertices: Vec<P3>,
    pub length: f64,
    pub delay: f64,
    /// (azimuth, elevation) of departure at tx, radians.
    pub aod: (f64, f64),
    /// (azimuth, elevation) at rx, pointing back along the arriving ray.
    pub aoa: (f64, f64),
    pub reflections: Vec<Reflection>,
    pub foliage_db: f64,
    pub gain: Complex64,
}

impl RayPath {
    pub fn aod_direction(&self) -> P3 {
        direction(self.aod.0, self.aod.1)
    }

    pub fn aoa_direction(&self) -> P3 {
        direction(self.aoa.0, self.aoa.1)
    }

    /// A geometry-free path carrying only angles, length and gain.
    pub fn synthetic(kind: PathKind, aod: P3, aoa: P3, length: f64, gain: Complex64) -> Self {
        RayPath {
            kind,
            vertices: Vec::new(),
            length,
            delay: length / SPEED_OF_LIGHT,
            aod: angles(unit(aod)),
            aoa: angles(unit(aoa)),
            reflections: Vec::new(),
            foliage_db: 0.0,
            gain,
        }
    }
}

/// Fresnel reflection coefficient of a half-space with relative permittivity
/// `eps_r` (`eps' - j eps''`). Both polarizations share the sign convention
/// that makes them equal at normal incidence.
pub fn fresnel_reflection(eps_r: Complex64, incidence_angle: f64, pol: Polarization) -> Complex64 {
    let (sin_t, cos_t) = incidence_angle.sin_cos();
    let root = (eps_r - sin_t * sin_t).sqrt();
    match pol {
        Polarization::TE => (cos_t - root) / (cos_t + root),
        Polarization::TM => (root - eps_r * cos_t) / (root + eps_r * cos_t),
    }
}

/// Length of the part of `a → b` inside the convex region described by
/// `inside`, given every parameter value where the boundary may be crossed.
fn chord_length(a: P3, b: P3, mut breaks: Vec<f64>, inside: impl Fn(P3) -> bool) -> f64 {
    breaks.push(0.0);
    breaks.push(1.0);
    breaks.retain(|t| t.is_finite() && (0.0..=1.0).contains(t));
    breaks.sort_by(f64::total_cmp);
    let d = sub(b, a);
    let len = norm(d);
    let at = |t: f64| [a[0] + t * d[0], a[1] + t * d[1], a[2] + t * d[2]];
    breaks
        .windows(2)
        .filter(|w| w[1] > w[0] && inside(at(0.5 * (w[0] + w[1]))))
        .map(|w| (w[1] - w[0]) * len)
        .sum()
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() < 1e-14 {
        if b.abs() < 1e-14 {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let s = disc.sqrt();
    // numerically stable pair
    let q = -0.5 * (b + b.signum() * s);
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

fn plane_crossing(a: P3, b: P3, axis: usize, value: f64) -> Option<f64> {
    let denom = b[axis] - a[axis];
    (denom.abs() > 1e-15).then(|| (value - a[axis]) / denom)
}

/// Chord of `a → b` through the tree's trunk cylinder.
pub fn trunk_chord(a: P3, b: P3, tree: &Tree) -> f64 {
    let [cx, cy] = tree.position;
    let r = tree.trunk_radius;
    let d = sub(b, a);
    let (ox, oy) = (a[0] - cx, a[1] - cy);
    let mut breaks = quadratic_roots(d[0] * d[0] + d[1] * d[1], 2.0 * (ox * d[0] + oy * d[1]), ox * ox + oy * oy - r * r);
    breaks.extend(plane_crossing(a, b, 2, 0.0));
    breaks.extend(plane_crossing(a, b, 2, tree.trunk_height));
    chord_length(a, b, breaks, |p| {
        (p[0] - cx).powi(2) + (p[1] - cy).powi(2) < r * r && p[2] > 0.0 && p[2] < tree.trunk_height
    })
}

/// Chord of `a → b` through the tree's canopy cone.
pub fn canopy_chord(a: P3, b: P3, tree: &Tree) -> f64 {
    let [cx, cy] = tree.position;
    let base = tree.trunk_height;
    let apex = tree.total_height();
    let slope = tree.canopy_base_radius / tree.canopy_height;
    let d = sub(b, a);
    let (ox, oy) = (a[0] - cx, a[1] - cy);
    // radius bound k(t) = slope * (apex - z(t)) = slope * (e - t dz)
    let e = apex - a[2];
    let k2 = slope * slope;
    let qa = d[0] * d[0] + d[1] * d[1] - k2 * d[2] * d[2];
    let qb = 2.0 * (ox * d[0] + oy * d[1]) + 2.0 * k2 * e * d[2];
    let qc = ox * ox + oy * oy - k2 * e * e;
    let mut breaks = quadratic_roots(qa, qb, qc);
    breaks.extend(plane_crossing(a, b, 2, base));
    breaks.extend(plane_crossing(a, b, 2, apex));
    chord_length(a, b, breaks, |p| {
        let rho2 = (p[0] - cx).powi(2) + (p[1] - cy).powi(2);
        let bound = slope * (apex - p[2]);
        p[2] >= base && p[2] <= apex && rho2 <= bound * bound
    })
}

fn segment_may_touch_tree(a: P3, b: P3, tree: &Tree) -> bool {
    let r = tree.canopy_base_radius.max(tree.trunk_radius);
    let [cx, cy] = tree.position;
    a[0].min(b[0]) <= cx + r
        && a[0].max(b[0]) >= cx - r
        && a[1].min(b[1]) <= cy + r
        && a[1].max(b[1]) >= cy - r
        && a[2].min(b[2]) <= tree.total_height()
}

/// Foliage loss in dB along a segment: canopy chords times their attenuation,
/// `+∞` when the segment passes through a trunk.
pub fn foliage_loss(a: P3, b: P3, trees: &[Tree]) -> f64 {
    let mut loss = 0.0;
    for tree in trees.iter().filter(|t| segment_may_touch_tree(a, b, t)) {
        if trunk_chord(a, b, tree) > OCCLUSION_TOLERANCE {
            return f64::INFINITY;
        }
        loss += canopy_chord(a, b, tree) * tree.canopy_attenuation_db_per_m;
    }
    loss
}

/// True when the segment passes through a building interior, shrunk by the
/// occlusion tolerance so grazing and reflection-point contacts pass.
fn blocked_by_buildings(a: P3, b: P3, scene: &Scene) -> bool {
    let d = sub(b, a);
    scene.buildings.iter().any(|bd| {
        let r = bd.footprint;
        let lo = [r.x + OCCLUSION_TOLERANCE, r.y + OCCLUSION_TOLERANCE, OCCLUSION_TOLERANCE];
        let hi = [
            r.x + r.w - OCCLUSION_TOLERANCE,
            r.y + r.h - OCCLUSION_TOLERANCE,
            bd.height - OCCLUSION_TOLERANCE,
        ];
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for k in 0..3 {
            if d[k].abs() < 1e-15 {
                if a[k] <= lo[k] || a[k] >= hi[k] {
                    return false;
                }
            } else {
                let (mut ta, mut tb) = ((lo[k] - a[k]) / d[k], (hi[k] - a[k]) / d[k]);
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 >= t1 {
                    return false;
                }
            }
        }
        t1 > t0
    })
}

/// Path search over a fixed scene.
pub struct Tracer<'a> {
    scene: &'a Scene,
    facets: Vec<Facet>,
    permittivity: Vec<Complex64>,
    wavelength: f64,
}

impl<'a> Tracer<'a> {
    pub fn new(scene: &'a Scene) -> Self {
        let facets = scene_facets(scene);
        let permittivity = facets
            .iter()
            .map(|f| scene.material(f.material).permittivity(scene.frequency_hz))
            .collect();
        Tracer {
            scene,
            facets,
            permittivity,
            wavelength: scene.wavelength(),
        }
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    /// Foliage loss of a polyline, or `None` if any segment is blocked.
    fn polyline_loss(&self, vertices: &[P3]) -> Option<f64> {
        let mut total = 0.0;
        for w in vertices.windows(2) {
            if blocked_by_buildings(w[0], w[1], self.scene) {
                return None;
            }
            let loss = foliage_loss(w[0], w[1], &self.scene.trees);
            if loss.is_infinite() {
                return None;
            }
            total += loss;
        }
        Some(total)
    }

    fn build_path(&self, vertices: Vec<P3>, facets: &[usize]) -> Option<RayPath> {
        let foliage_db = self.polyline_loss(&vertices)?;
        let reflections = facets
            .iter()
            .enumerate()
            .map(|(i, &fi)| {
                let f = &self.facets[fi];
                let incoming = unit(sub(vertices[i + 1], vertices[i]));
                let cos_t = dot(incoming, f.normal()).abs().min(1.0);
                let theta = cos_t.acos();
                let pol = f.kind.polarization();
                Reflection {
                    point: vertices[i + 1],
                    facet: f.kind,
                    material: f.material,
                    incidence_angle: theta,
                    polarization: pol,
                    coefficient: fresnel_reflection(self.permittivity[fi], theta, pol),
                }
            })
            .collect::<Vec<_>>();
        let length: f64 = vertices.windows(2).map(|w| norm(sub(w[1], w[0]))).sum();
        let n = vertices.len();
        let aod = angles(unit(sub(vertices[1], vertices[0])));
        let aoa = angles(unit(sub(vertices[n - 2], vertices[n - 1])));
        let kind = if facets.is_empty() {
            PathKind::LoS
        } else {
            PathKind::Reflected(facets.len() as u8)
        };
        let mut path = RayPath {
            kind,
            vertices,
            length,
            delay: length / SPEED_OF_LIGHT,
            aod,
            aoa,
            reflections,
            foliage_db,
            gain: Complex64::new(0.0, 0.0),
        };
        path.gain = gain_for(&path, self.wavelength);
        Some(path)
    }

    /// Every unblocked specular path from `tx` to `rx` with at most
    /// `max_reflections` (≤ 2) bounces.
    pub fn trace(&self, tx: P3, rx: P3, max_reflections: usize) -> Vec<RayPath> {
        let lift = |p: P3| [p[0], p[1], p[2].max(MIN_ENDPOINT_HEIGHT)];
        let (tx, rx) = (lift(tx), lift(rx));
        let mut paths = Vec::new();
        if norm(sub(rx, tx)) == 0.0 {
            return paths;
        }
        const SIDE: f64 = 1e-9;

        paths.extend(self.build_path(vec![tx, rx], &[]));

        if max_reflections >= 1 {
            for (fi, f) in self.facets.iter().enumerate() {
                if f.signed_distance(tx) <= SIDE || f.signed_distance(rx) <= SIDE {
                    continue;
                }
                let image = f.mirror(tx);
                if let Some(p) = f.hit(image, rx) {
                    paths.extend(self.build_path(vec![tx, p, rx], &[fi]));
                }
            }
        }

        if max_reflections >= 2 {
            for (i1, f1) in self.facets.iter().enumerate() {
                if f1.signed_distance(tx) <= SIDE {
                    continue;
                }
                let image1 = f1.mirror(tx);
                for (i2, f2) in self.facets.iter().enumerate() {
                    if i1 == i2 || f2.signed_distance(rx) <= SIDE {
                        continue;
                    }
                    let image2 = f2.mirror(image1);
                    let Some(p2) = f2.hit(image2, rx) else { continue };
                    if f1.signed_distance(p2) <= SIDE {
                        continue;
                    }
                    let Some(p1) = f1.hit(image1, p2) else { continue };
                    if f2.signed_distance(p1) <= SIDE {
                        continue;
                    }
                    paths.extend(self.build_path(vec![tx, p1, p2, rx], &[i1, i2]));
                }
            }
        }
        paths
    }
}

/// Convenience wrapper building a [`Tracer`] for a single query.
pub fn trace_paths(scene: &Scene, tx: P3, rx: P3, max_reflections: usize) -> Vec<RayPath> {
    Tracer::new(scene).trace(tx, rx, max_reflections)
}

fn gain_for(path: &RayPath, wavelength: f64) -> Complex64 {
    if path.foliage_db.is_infinite() {
        return Complex64::new(0.0, 0.0);
    }
    let spreading = wavelength / (4.0 * PI * path.length);
    let reflection: Complex64 = path.reflections.iter().map(|r| r.coefficient).product();
    let foliage = 10f64.powf(-path.foliage_db / 20.0);
    let phase = Complex64::from_polar(1.0, -2.0 * PI * path.length / wavelength);
    reflection * (spreading * foliage) * phase
}

/// Complex amplitude of a traced path, recomputing reflection coefficients
/// from the scene materials.
pub fn path_gain(path: &RayPath, scene: &Scene) -> Complex64 {
    let mut p = path.clone();
    for r in &mut p.reflections {
        let eps = scene.material(r.material).permittivity(scene.frequency_hz);
        r.coefficient = fresnel_reflection(eps, r.incidence_angle, r.polarization);
    }
    gain_for(&p, scene.wavelength())
}

/// Writes paths as CSV with a header row.
pub fn write_paths_csv<W: Write>(paths: &[RayPath], mut out: W) -> std::io::Result<()> {
    writeln!(out, "kind,order,length_m,delay_s,aod_az,aod_el,aoa_az,aoa_el,gain_re,gain_im")?;
    for p in paths {
        let kind = match p.kind {
            PathKind::LoS => "LoS",
            PathKind::Reflected(_) => "Reflected",
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            kind,
            p.kind.order(),
            p.length,
            p.delay,
            p.aod.0,
            p.aod.1,
            p.aoa.0,
            p.aoa.1,
            p.gain.re,
            p.gain.im
        )?;
    }
    Ok(())
}
