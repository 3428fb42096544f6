//! Scene description: materials, buildings, trees, towers and the receiver grid.
//!
//! Coordinates are local east-north-up meters with the origin at the
//! southwest corner of the extent. Scenes are immutable once loaded.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ArrayConfig;
use crate::error::{Error, Result};
use crate::VACUUM_PERMITTIVITY;

/// Surface material with ITU-R P.2040 style permittivity constants.
///
/// `c` is in S/m at 1 GHz, scaled by `f_GHz^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub name: String,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Material {
    pub fn new(name: &str, a: f64, b: f64, c: f64, d: f64) -> Self {
        Material {
            name: name.to_string(),
            a,
            b,
            c,
            d,
        }
    }

    pub fn permittivity(&self, frequency_hz: f64) -> Complex64 {
        permittivity(self, frequency_hz)
    }
}

/// Complex relative permittivity `eps' - j eps''` of `m` at `frequency_hz`.
pub fn permittivity(m: &Material, frequency_hz: f64) -> Complex64 {
    let f_ghz = frequency_hz * 1e-9;
    let real = m.a * f_ghz.powf(m.b);
    let conductivity = m.c * f_ghz.powf(m.d);
    let imag = conductivity / (2.0 * PI * VACUUM_PERMITTIVITY * frequency_hz);
    Complex64::new(real, -imag)
}

/// Built-in material table (ITU-R P.2040 Table 3, 1-10 GHz range).
pub mod itu {
    use super::Material;

    pub fn concrete() -> Material {
        Material::new("concrete", 5.24, 0.0, 0.0462, 0.7822)
    }

    pub fn brick() -> Material {
        Material::new("brick", 3.91, 0.0, 0.0238, 0.16)
    }

    pub fn wood() -> Material {
        Material::new("wood", 1.99, 0.0, 0.0047, 1.0718)
    }

    pub fn glass() -> Material {
        Material::new("glass", 6.31, 0.0, 0.0036, 1.3394)
    }

    pub fn metal() -> Material {
        Material::new("metal", 1.0, 0.0, 1e7, 0.0)
    }

    pub fn very_dry_ground() -> Material {
        Material::new("very_dry_ground", 3.0, 0.0, 0.00015, 2.52)
    }

    pub fn medium_dry_ground() -> Material {
        Material::new("medium_dry_ground", 15.0, -0.1, 0.035, 1.63)
    }

    pub fn wet_ground() -> Material {
        Material::new("wet_ground", 30.0, -0.4, 0.15, 1.30)
    }

    pub fn table() -> Vec<Material> {
        vec![
            concrete(),
            brick(),
            wood(),
            glass(),
            metal(),
            very_dry_ground(),
            medium_dry_ground(),
            wet_ground(),
        ]
    }

    pub fn lookup(name: &str) -> Option<Material> {
        let key = name.strip_prefix("itu_").unwrap_or(name);
        table().into_iter().find(|m| m.name == key)
    }
}

/// Axis-aligned rectangle anchored at its southwest corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x && p[0] <= self.x + self.w && p[1] >= self.y && p[1] <= self.y + self.h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Building {
    pub footprint: Rect,
    pub height: f64,
    /// Index into [`Scene::materials`].
    pub material: usize,
}

/// Cylinder trunk topped by a cone canopy.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub position: [f64; 2],
    pub trunk_height: f64,
    pub trunk_radius: f64,
    pub canopy_height: f64,
    pub canopy_base_radius: f64,
    pub trunk_material: usize,
    pub canopy_attenuation_db_per_m: f64,
}

impl Tree {
    pub const DEFAULT_TRUNK_HEIGHT: f64 = 6.0;
    pub const DEFAULT_TRUNK_RADIUS: f64 = 0.4;
    pub const DEFAULT_CANOPY_HEIGHT: f64 = 14.0;
    pub const DEFAULT_CANOPY_BASE_RADIUS: f64 = 5.0;
    pub const DEFAULT_ATTENUATION_DB_PER_M: f64 = 1.0;

    pub fn total_height(&self) -> f64 {
        self.trunk_height + self.canopy_height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tower {
    pub id: u32,
    pub position: [f64; 2],
    pub height: f64,
    pub array: ArrayConfig,
}

impl Tower {
    pub fn location(&self) -> [f64; 3] {
        [self.position[0], self.position[1], self.height]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub frequency_hz: f64,
    pub materials: Vec<Material>,
    /// `None` disables the ground reflector (free space below the receivers).
    pub ground_material: Option<usize>,
    pub buildings: Vec<Building>,
    pub trees: Vec<Tree>,
    pub towers: Vec<Tower>,
    pub extent: [f64; 2],
    pub grid_spacing: f64,
    pub altitudes: Vec<f64>,
    pub tx_power_w: f64,
    pub rx_array: ArrayConfig,
}

impl Scene {
    pub const DEFAULT_FREQUENCY_HZ: f64 = 3.4e9;
    pub const DEFAULT_EXTENT: [f64; 2] = [1080.0, 2130.0];
    pub const DEFAULT_GRID_SPACING: f64 = 30.0;
    pub const DEFAULT_TX_POWER_W: f64 = 10.0;
    pub const DEFAULT_TOWER_HEIGHT: f64 = 10.0;

    pub fn default_altitudes() -> Vec<f64> {
        (0..9).map(|i| 30.0 + 10.0 * i as f64).collect()
    }

    pub fn wavelength(&self) -> f64 {
        crate::SPEED_OF_LIGHT / self.frequency_hz
    }

    pub fn material(&self, index: usize) -> &Material {
        &self.materials[index]
    }

    pub fn ground(&self) -> Option<&Material> {
        self.ground_material.map(|i| &self.materials[i])
    }

    pub fn tower(&self, id: u32) -> Option<&Tower> {
        self.towers.iter().find(|t| t.id == id)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.extent, self.grid_spacing)
    }

    /// Index into `towers` of the horizontally nearest tower; ties go to the lowest id.
    pub fn nearest_tower(&self, p: [f64; 2]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, t) in self.towers.iter().enumerate() {
            let d2 = (t.position[0] - p[0]).powi(2) + (t.position[1] - p[1]).powi(2);
            best = match best {
                None => Some((k, d2)),
                Some((bk, bd2)) => {
                    if d2 < bd2 || (d2 == bd2 && t.id < self.towers[bk].id) {
                        Some((k, d2))
                    } else {
                        Some((bk, bd2))
                    }
                }
            };
        }
        best.map(|(k, _)| k)
    }

    pub fn to_json(&self) -> String {
        let doc = SceneDoc::from(self);
        serde_json::to_string_pretty(&doc).expect("scene document serializes")
    }
}

/// Uniform receiver grid. Index 0 is the southwest corner; the index runs
/// west to east along a row, then steps one row north.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
}

impl Grid {
    pub fn new(extent: [f64; 2], spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::invalid("grid_spacing_m", "must be positive"));
        }
        // 1080 m at 30 m spacing gives 36 columns: the point count is the
        // number of whole cells, each anchored at its southwest corner.
        let count = |len: f64| (len / spacing + 1e-9).floor() as usize;
        let (nx, ny) = (count(extent[0]), count(extent[1]));
        if nx == 0 || ny == 0 {
            return Err(Error::invalid(
                "extent_m",
                "extent smaller than one grid cell",
            ));
        }
        Ok(Grid { nx, ny, spacing })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn position(&self, index: usize) -> [f64; 2] {
        let col = index % self.nx;
        let row = index / self.nx;
        [col as f64 * self.spacing, row as f64 * self.spacing]
    }

    pub fn col_row(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|i| self.position(i)).collect()
    }
}

/// Receiver positions of the scene grid in index order.
pub fn grid_positions(scene: &Scene) -> Result<Vec<[f64; 2]>> {
    Ok(scene.grid()?.positions())
}

// ---------------------------------------------------------------------------
// JSON document

fn default_frequency() -> f64 {
    Scene::DEFAULT_FREQUENCY_HZ
}
fn default_extent() -> [f64; 2] {
    Scene::DEFAULT_EXTENT
}
fn default_spacing() -> f64 {
    Scene::DEFAULT_GRID_SPACING
}
fn default_power() -> f64 {
    Scene::DEFAULT_TX_POWER_W
}
fn default_tower_height() -> f64 {
    Scene::DEFAULT_TOWER_HEIGHT
}
fn default_trunk_material() -> String {
    "wood".to_string()
}
fn default_attenuation() -> f64 {
    Tree::DEFAULT_ATTENUATION_DB_PER_M
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayDoc {
    #[serde(default = "ArrayDoc::default_elements")]
    pub elements: usize,
    #[serde(default = "ArrayDoc::default_spacing")]
    pub spacing_wavelengths: f64,
    #[serde(default = "ArrayDoc::default_axis")]
    pub axis: [f64; 3],
}

impl ArrayDoc {
    fn default_elements() -> usize {
        ArrayConfig::DEFAULT_ELEMENTS
    }
    fn default_spacing() -> f64 {
        ArrayConfig::DEFAULT_SPACING
    }
    fn default_axis() -> [f64; 3] {
        ArrayConfig::DEFAULT_AXIS
    }
}

impl Default for ArrayDoc {
    fn default() -> Self {
        ArrayDoc::from(&ArrayConfig::default())
    }
}

impl From<&ArrayConfig> for ArrayDoc {
    fn from(a: &ArrayConfig) -> Self {
        ArrayDoc {
            elements: a.elements,
            spacing_wavelengths: a.spacing,
            axis: a.axis,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingDoc {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub height: f64,
    pub material: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeDoc {
    pub x: f64,
    pub y: f64,
    #[serde(default = "TreeDoc::trunk_height")]
    pub trunk_height: f64,
    #[serde(default = "TreeDoc::trunk_radius")]
    pub trunk_radius: f64,
    #[serde(default = "TreeDoc::canopy_height")]
    pub canopy_height: f64,
    #[serde(default = "TreeDoc::canopy_base_radius")]
    pub canopy_base_radius: f64,
    #[serde(default = "default_attenuation")]
    pub attenuation_db_per_m: f64,
    #[serde(default = "default_trunk_material")]
    pub trunk_material: String,
}

impl TreeDoc {
    fn trunk_height() -> f64 {
        Tree::DEFAULT_TRUNK_HEIGHT
    }
    fn trunk_radius() -> f64 {
        Tree::DEFAULT_TRUNK_RADIUS
    }
    fn canopy_height() -> f64 {
        Tree::DEFAULT_CANOPY_HEIGHT
    }
    fn canopy_base_radius() -> f64 {
        Tree::DEFAULT_CANOPY_BASE_RADIUS
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TowerDoc {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    #[serde(default = "default_tower_height")]
    pub height: f64,
    #[serde(default)]
    pub array: ArrayDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDoc {
    #[serde(default = "default_frequency")]
    pub frequency_hz: f64,
    #[serde(default = "default_extent")]
    pub extent_m: [f64; 2],
    #[serde(default = "default_spacing")]
    pub grid_spacing_m: f64,
    #[serde(default = "Scene::default_altitudes")]
    pub altitudes_m: Vec<f64>,
    #[serde(default = "default_power")]
    pub tx_power_w: f64,
    #[serde(default)]
    pub materials: Vec<Material>,
    pub ground_material: Option<String>,
    #[serde(default)]
    pub buildings: Vec<BuildingDoc>,
    #[serde(default)]
    pub trees: Vec<TreeDoc>,
    pub towers: Vec<TowerDoc>,
    #[serde(default)]
    pub rx_array: ArrayDoc,
}

impl From<&Scene> for SceneDoc {
    fn from(s: &Scene) -> Self {
        let name = |i: usize| s.materials[i].name.clone();
        SceneDoc {
            frequency_hz: s.frequency_hz,
            extent_m: s.extent,
            grid_spacing_m: s.grid_spacing,
            altitudes_m: s.altitudes.clone(),
            tx_power_w: s.tx_power_w,
            materials: s.materials.clone(),
            ground_material: s.ground_material.map(name),
            buildings: s
                .buildings
                .iter()
                .map(|b| BuildingDoc {
                    x: b.footprint.x,
                    y: b.footprint.y,
                    w: b.footprint.w,
                    h: b.footprint.h,
                    height: b.height,
                    material: name(b.material),
                })
                .collect(),
            trees: s
                .trees
                .iter()
                .map(|t| TreeDoc {
                    x: t.position[0],
                    y: t.position[1],
                    trunk_height: t.trunk_height,
                    trunk_radius: t.trunk_radius,
                    canopy_height: t.canopy_height,
                    canopy_base_radius: t.canopy_base_radius,
                    attenuation_db_per_m: t.canopy_attenuation_db_per_m,
                    trunk_material: name(t.trunk_material),
                })
                .collect(),
            towers: s
                .towers
                .iter()
                .map(|t| TowerDoc {
                    id: t.id,
                    x: t.position[0],
                    y: t.position[1],
                    height: t.height,
                    array: ArrayDoc::from(&t.array),
                })
                .collect(),
            rx_array: ArrayDoc::from(&s.rx_array),
        }
    }
}

/// Parses and validates a JSON scene document.
pub fn load_scene(text: &str) -> Result<Scene> {
    let doc: SceneDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Scene::try_from(doc)
}

pub fn load_scene_file(path: impl AsRef<std::path::Path>) -> Result<Scene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_scene(&text)
}

struct MaterialTable {
    materials: Vec<Material>,
}

impl MaterialTable {
    fn resolve(&mut self, name: &str, field: String) -> Result<usize> {
        if let Some(i) = self.materials.iter().position(|m| m.name == name) {
            return Ok(i);
        }
        match itu::lookup(name) {
            Some(mut m) => {
                m.name = name.to_string();
                self.materials.push(m);
                Ok(self.materials.len() - 1)
            }
            None => Err(Error::UnknownMaterial {
                name: name.to_string(),
                field,
            }),
        }
    }
}

fn positive(value: f64, field: impl Into<String>) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::invalid(field, format!("must be positive, got {value}")))
    }
}

impl TryFrom<SceneDoc> for Scene {
    type Error = Error;

    fn try_from(doc: SceneDoc) -> Result<Scene> {
        positive(doc.frequency_hz, "frequency_hz")?;
        positive(doc.extent_m[0], "extent_m[0]")?;
        positive(doc.extent_m[1], "extent_m[1]")?;
        positive(doc.grid_spacing_m, "grid_spacing_m")?;
        positive(doc.tx_power_w, "tx_power_w")?;
        Grid::new(doc.extent_m, doc.grid_spacing_m)?;

        for (i, w) in doc.altitudes_m.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::invalid(
                    format!("altitudes_m[{}]", i + 1),
                    "altitudes must be strictly increasing",
                ));
            }
        }
        for (i, h) in doc.altitudes_m.iter().enumerate() {
            positive(*h, format!("altitudes_m[{i}]"))?;
        }

        for (i, m) in doc.materials.iter().enumerate() {
            if !(m.a > 0.0) {
                return Err(Error::invalid(format!("materials[{i}].a"), "must be positive"));
            }
            if !(m.d >= 0.0) {
                return Err(Error::invalid(format!("materials[{i}].d"), "must be non-negative"));
            }
            if doc.materials[..i].iter().any(|o| o.name == m.name) {
                return Err(Error::invalid(
                    format!("materials[{i}].name"),
                    format!("duplicate material `{}`", m.name),
                ));
            }
        }
        let mut table = MaterialTable {
            materials: doc.materials.clone(),
        };

        let ground_material = match &doc.ground_material {
            Some(name) => Some(table.resolve(name, "ground_material".into())?),
            None => None,
        };

        let mut buildings = Vec::with_capacity(doc.buildings.len());
        for (i, b) in doc.buildings.iter().enumerate() {
            let field = |f: &str| format!("buildings[{i}].{f}");
            positive(b.w, field("w"))?;
            positive(b.h, field("h"))?;
            positive(b.height, field("height"))?;
            let material = table.resolve(&b.material, field("material"))?;
            buildings.push(Building {
                footprint: Rect {
                    x: b.x,
                    y: b.y,
                    w: b.w,
                    h: b.h,
                },
                height: b.height,
                material,
            });
        }

        let mut trees = Vec::with_capacity(doc.trees.len());
        for (i, t) in doc.trees.iter().enumerate() {
            let field = |f: &str| format!("trees[{i}].{f}");
            positive(t.trunk_height, field("trunk_height"))?;
            positive(t.trunk_radius, field("trunk_radius"))?;
            positive(t.canopy_height, field("canopy_height"))?;
            positive(t.canopy_base_radius, field("canopy_base_radius"))?;
            if !(t.attenuation_db_per_m >= 0.0) {
                return Err(Error::invalid(
                    field("attenuation_db_per_m"),
                    "must be non-negative",
                ));
            }
            let trunk_material = table.resolve(&t.trunk_material, field("trunk_material"))?;
            trees.push(Tree {
                position: [t.x, t.y],
                trunk_height: t.trunk_height,
                trunk_radius: t.trunk_radius,
                canopy_height: t.canopy_height,
                canopy_base_radius: t.canopy_base_radius,
                trunk_material,
                canopy_attenuation_db_per_m: t.attenuation_db_per_m,
            });
        }

        let extent = Rect {
            x: 0.0,
            y: 0.0,
            w: doc.extent_m[0],
            h: doc.extent_m[1],
        };
        let mut towers = Vec::with_capacity(doc.towers.len());
        for (i, t) in doc.towers.iter().enumerate() {
            let field = |f: &str| format!("towers[{i}].{f}");
            positive(t.height, field("height"))?;
            if !extent.contains([t.x, t.y]) {
                return Err(Error::invalid(field("x"), "tower outside extent"));
            }
            if doc.towers[..i].iter().any(|o| o.id == t.id) {
                return Err(Error::invalid(field("id"), format!("duplicate tower id {}", t.id)));
            }
            let array = ArrayConfig::new(t.array.elements, t.array.spacing_wavelengths, t.array.axis)
                .map_err(|e| match e {
                    Error::Invalid { field: f, message } => Error::Invalid {
                        field: format!("towers[{i}].array.{f}"),
                        message,
                    },
                    other => other,
                })?;
            towers.push(Tower {
                id: t.id,
                position: [t.x, t.y],
                height: t.height,
                array,
            });
        }

        let rx_array = ArrayConfig::new(
            doc.rx_array.elements,
            doc.rx_array.spacing_wavelengths,
            doc.rx_array.axis,
        )
        .map_err(|e| match e {
            Error::Invalid { field, message } => Error::Invalid {
                field: format!("rx_array.{field}"),
                message,
            },
            other => other,
        })?;

        Ok(Scene {
            frequency_hz: doc.frequency_hz,
            materials: table.materials,
            ground_material,
            buildings,
            trees,
            towers,
            extent: doc.extent_m,
            grid_spacing: doc.grid_spacing_m,
            altitudes: doc.altitudes_m,
            tx_power_w: doc.tx_power_w,
            rx_array,
        })
    }
}
