//! Device inventory: every MR gets a dense global id, a logical coordinate,
//! a carrier channel and a position on the floorplan.
//!
//! Ids are laid out block by block (CONV first), then unit, bank, array
//! (input before weight), column. The MRs of one bank are therefore a
//! contiguous id range of `2 * bank_width`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::config::{AcceleratorConfig, BlockConfig};
use super::Result;
use crate::photonics::{ChannelGrid, ChipBounds, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Conv,
    Fc,
}

impl Block {
    pub const ALL: [Block; 2] = [Block::Conv, Block::Fc];

    pub fn as_str(&self) -> &'static str {
        match self {
            Block::Conv => "conv",
            Block::Fc => "fc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayRole {
    /// Imprints activations onto the carriers.
    Input,
    /// Multiplies the carriers by the stationary weights.
    Weight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MrId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BankId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MrCoordinate {
    pub block: Block,
    pub unit: usize,
    pub bank: usize,
    pub column: usize,
    pub role: ArrayRole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout {
    pub block: Block,
    pub config: BlockConfig,
    pub grid: ChannelGrid,
    pub origin: Point,
    pub first_mr: u32,
    pub first_bank: u32,
    unit_width: f64,
    unit_height: f64,
    unit_gap: f64,
    /// x offset of the weight array from the unit's left edge.
    weight_offset: f64,
}

impl BlockLayout {
    pub fn mr_range(&self) -> Range<u32> {
        self.first_mr..self.first_mr + self.config.mr_count() as u32
    }

    pub fn bank_range(&self) -> Range<u32> {
        self.first_bank..self.first_bank + self.config.banks() as u32
    }

    pub fn extent(&self) -> (f64, f64) {
        let c = &self.config;
        let cols = c.units_per_row.min(c.units);
        let rows = c.units.div_ceil(c.units_per_row);
        let (px, py) = self.unit_pitch();
        (
            cols as f64 * px - self.unit_gap,
            rows as f64 * py - self.unit_gap,
        )
    }

    fn unit_pitch(&self) -> (f64, f64) {
        (self.unit_width + self.unit_gap, self.unit_height + self.unit_gap)
    }

    fn array_offset(&self, role: ArrayRole) -> f64 {
        match role {
            ArrayRole::Input => 0.0,
            ArrayRole::Weight => self.weight_offset,
        }
    }

    fn unit_origin(&self, unit: usize) -> Point {
        let (px, py) = self.unit_pitch();
        let ux = unit % self.config.units_per_row;
        let uy = unit / self.config.units_per_row;
        Point::new(self.origin.x + ux as f64 * px, self.origin.y + uy as f64 * py)
    }
}

/// The photonic substrate: a CONV block and an FC block of VDP units.
#[derive(Debug, Clone, PartialEq)]
pub struct Accelerator {
    config: AcceleratorConfig,
    conv: BlockLayout,
    fc: BlockLayout,
    chip: ChipBounds,
}

impl Accelerator {
    /// Builds the device inventory. All MRs start healthy; faults live in
    /// [`super::FaultedAccelerator`].
    pub fn build(config: AcceleratorConfig) -> Result<Self> {
        config.validate()?;
        let fp = config.floorplan;
        let make = |block: Block, cfg: BlockConfig, origin: Point, first_mr: u32, first_bank: u32| -> Result<BlockLayout> {
            Ok(BlockLayout {
                block,
                config: cfg,
                grid: config.grid(cfg.bank_width)?,
                origin,
                first_mr,
                first_bank,
                unit_width: 2.0 * cfg.bank_width as f64 * fp.mr_pitch_um + fp.array_gap_um,
                unit_height: cfg.banks_per_unit as f64 * fp.bank_pitch_um,
                unit_gap: fp.unit_gap_um,
                weight_offset: cfg.bank_width as f64 * fp.mr_pitch_um + fp.array_gap_um,
            })
        };
        let conv = make(
            Block::Conv,
            config.conv,
            Point::new(fp.margin_um, fp.margin_um),
            0,
            0,
        )?;
        let (conv_w, conv_h) = conv.extent();
        let fc = make(
            Block::Fc,
            config.fc,
            Point::new(fp.margin_um + conv_w + fp.block_gap_um, fp.margin_um),
            config.conv.mr_count() as u32,
            config.conv.banks() as u32,
        )?;
        let (fc_w, fc_h) = fc.extent();
        let chip = ChipBounds {
            width_um: fc.origin.x + fc_w + fp.margin_um,
            height_um: conv_h.max(fc_h) + 2.0 * fp.margin_um,
        };
        Ok(Self {
            config,
            conv,
            fc,
            chip,
        })
    }

    pub fn config(&self) -> &AcceleratorConfig {
        &self.config
    }

    pub fn chip(&self) -> ChipBounds {
        self.chip
    }

    pub fn block(&self, block: Block) -> &BlockLayout {
        match block {
            Block::Conv => &self.conv,
            Block::Fc => &self.fc,
        }
    }

    pub fn mr_count(&self) -> usize {
        self.conv.config.mr_count() + self.fc.config.mr_count()
    }

    pub fn bank_count(&self) -> usize {
        self.conv.config.banks() + self.fc.config.banks()
    }

    fn layout_of_mr(&self, id: MrId) -> &BlockLayout {
        if id.0 < self.fc.first_mr {
            &self.conv
        } else {
            &self.fc
        }
    }

    fn layout_of_bank(&self, id: BankId) -> &BlockLayout {
        if id.0 < self.fc.first_bank {
            &self.conv
        } else {
            &self.fc
        }
    }

    pub fn mr_id(&self, c: &MrCoordinate) -> MrId {
        let l = self.block(c.block);
        let cfg = &l.config;
        debug_assert!(c.unit < cfg.units && c.bank < cfg.banks_per_unit && c.column < cfg.bank_width);
        let bank = c.unit * cfg.banks_per_unit + c.bank;
        let role = match c.role {
            ArrayRole::Input => 0,
            ArrayRole::Weight => 1,
        };
        MrId(l.first_mr + ((bank * 2 + role) * cfg.bank_width + c.column) as u32)
    }

    pub fn coordinate(&self, id: MrId) -> MrCoordinate {
        let l = self.layout_of_mr(id);
        let cfg = &l.config;
        let local = (id.0 - l.first_mr) as usize;
        let column = local % cfg.bank_width;
        let row = local / cfg.bank_width;
        let role = if row % 2 == 0 { ArrayRole::Input } else { ArrayRole::Weight };
        let bank = row / 2;
        MrCoordinate {
            block: l.block,
            unit: bank / cfg.banks_per_unit,
            bank: bank % cfg.banks_per_unit,
            column,
            role,
        }
    }

    pub fn bank_id(&self, block: Block, unit: usize, bank: usize) -> BankId {
        let l = self.block(block);
        BankId(l.first_bank + (unit * l.config.banks_per_unit + bank) as u32)
    }

    pub fn bank_of(&self, id: MrId) -> BankId {
        let l = self.layout_of_mr(id);
        let local = (id.0 - l.first_mr) as usize / (2 * l.config.bank_width);
        BankId(l.first_bank + local as u32)
    }

    pub fn bank_block(&self, id: BankId) -> Block {
        self.layout_of_bank(id).block
    }

    /// `(unit, bank)` of a global bank id.
    pub fn bank_coordinate(&self, id: BankId) -> (Block, usize, usize) {
        let l = self.layout_of_bank(id);
        let local = (id.0 - l.first_bank) as usize;
        (l.block, local / l.config.banks_per_unit, local % l.config.banks_per_unit)
    }

    /// Ids of both arrays of a bank, input row first.
    pub fn bank_mrs(&self, id: BankId) -> Range<u32> {
        let l = self.layout_of_bank(id);
        let w = 2 * l.config.bank_width as u32;
        let start = l.first_mr + (id.0 - l.first_bank) * w;
        start..start + w
    }

    pub fn bank_size(&self, id: BankId) -> usize {
        2 * self.layout_of_bank(id).config.bank_width
    }

    pub fn bank_centroid(&self, id: BankId) -> Point {
        let (block, unit, bank) = self.bank_coordinate(id);
        let l = self.block(block);
        let o = l.unit_origin(unit);
        let pitch = self.config.floorplan.bank_pitch_um;
        Point::new(o.x + l.unit_width / 2.0, o.y + (bank as f64 + 0.5) * pitch)
    }

    /// Axis-aligned box `(min, max)` containing every MR centre of a bank.
    pub fn bank_bounds(&self, id: BankId) -> (Point, Point) {
        let (block, unit, bank) = self.bank_coordinate(id);
        let l = self.block(block);
        let o = l.unit_origin(unit);
        let fp = &self.config.floorplan;
        let y = o.y + (bank as f64 + 0.5) * fp.bank_pitch_um;
        (
            Point::new(o.x + 0.5 * fp.mr_pitch_um, y),
            Point::new(o.x + l.unit_width - 0.5 * fp.mr_pitch_um, y),
        )
    }

    pub fn position(&self, id: MrId) -> Point {
        let c = self.coordinate(id);
        let l = self.block(c.block);
        let o = l.unit_origin(c.unit);
        let fp = &self.config.floorplan;
        Point::new(
            o.x + l.array_offset(c.role) + (c.column as f64 + 0.5) * fp.mr_pitch_um,
            o.y + (c.bank as f64 + 0.5) * fp.bank_pitch_um,
        )
    }

    /// Carrier channel an MR is tuned to: its column.
    pub fn home_channel(&self, id: MrId) -> usize {
        let l = self.layout_of_mr(id);
        (id.0 - l.first_mr) as usize % l.config.bank_width
    }

    pub fn grid_of(&self, id: MrId) -> &ChannelGrid {
        &self.layout_of_mr(id).grid
    }

    pub fn home_wavelength(&self, id: MrId) -> f64 {
        self.grid_of(id).wavelength(self.home_channel(id))
    }

    /// Calls `visit` for every MR whose centre lies within `radius` of
    /// `center`, in increasing id order within each bank.
    pub fn for_each_mr_within(&self, center: Point, radius: f64, mut visit: impl FnMut(MrId, Point)) {
        let r2 = radius * radius;
        let lo = Point::new(center.x - radius, center.y - radius);
        let hi = Point::new(center.x + radius, center.y + radius);
        self.for_each_mr_in_box(lo, hi, |id, p| {
            if p.distance_sq(&center) <= r2 {
                visit(id, p);
            }
        });
    }

    /// Calls `visit` for every MR whose centre lies in the closed box
    /// `[lo, hi]`, in increasing id order within each bank.
    pub fn for_each_mr_in_box(&self, lo: Point, hi: Point, mut visit: impl FnMut(MrId, Point)) {
        let fp = self.config.floorplan;
        let inside = |p: &Point| p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y;
        for l in [&self.conv, &self.fc] {
            let cfg = &l.config;
            for unit in 0..cfg.units {
                let o = l.unit_origin(unit);
                if hi.x < o.x || lo.x > o.x + l.unit_width || hi.y < o.y || lo.y > o.y + l.unit_height {
                    continue;
                }
                let span = |lo: f64, hi: f64, pitch: f64, n: usize| -> (usize, usize) {
                    let a = ((lo / pitch).floor() - 1.0).max(0.0) as usize;
                    let b = (((hi / pitch).ceil() + 1.0).max(0.0) as usize).min(n);
                    (a.min(n), b)
                };
                let (b0, b1) = span(lo.y - o.y, hi.y - o.y, fp.bank_pitch_um, cfg.banks_per_unit);
                for bank in b0..b1 {
                    let y = o.y + (bank as f64 + 0.5) * fp.bank_pitch_um;
                    for role in [ArrayRole::Input, ArrayRole::Weight] {
                        let x0 = o.x + l.array_offset(role);
                        let (c0, c1) = span(lo.x - x0, hi.x - x0, fp.mr_pitch_um, cfg.bank_width);
                        for column in c0..c1 {
                            let p = Point::new(x0 + (column as f64 + 0.5) * fp.mr_pitch_um, y);
                            if inside(&p) {
                                let id = self.mr_id(&MrCoordinate { block: l.block, unit, bank, column, role });
                                visit(id, p);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Global MR id range of a block.
    pub fn block_mrs(&self, block: Block) -> Range<u32> {
        self.block(block).mr_range()
    }

    pub fn block_banks(&self, block: Block) -> Range<u32> {
        self.block(block).bank_range()
    }
}
