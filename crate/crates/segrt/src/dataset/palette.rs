//! The fixed six-class palette shared by every mask in the toolkit.
//!
//! Class indices are stable and meaningful: 0 is background, classes `1..=5`
//! correspond one-to-one (shifted by one) to the network's five output
//! channels. Mask PNGs store exactly these RGB colors — any other color in a
//! mask file is an error, never silently remapped.

/// Total classes including background.
pub const CLASS_COUNT: usize = 6;

pub const BACKGROUND: u8 = 0;
pub const FIELD: u8 = 1;
pub const LINE: u8 = 2;
pub const ROBOT: u8 = 3;
pub const BALL: u8 = 4;
pub const GOAL_POST: u8 = 5;

/// One palette row: a class index, its human name, and its mask PNG color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PaletteEntry {
    pub class: u8,
    pub name: &'static str,
    pub rgb: [u8; 3],
}

/// The palette, indexed by class.
pub const PALETTE: [PaletteEntry; CLASS_COUNT] = [
    PaletteEntry {
        class: BACKGROUND,
        name: "background",
        rgb: [0, 0, 0],
    },
    PaletteEntry {
        class: FIELD,
        name: "field",
        rgb: [0, 128, 0],
    },
    PaletteEntry {
        class: LINE,
        name: "line",
        rgb: [255, 255, 255],
    },
    PaletteEntry {
        class: ROBOT,
        name: "robot",
        rgb: [255, 0, 0],
    },
    PaletteEntry {
        class: BALL,
        name: "ball",
        rgb: [255, 165, 0],
    },
    PaletteEntry {
        class: GOAL_POST,
        name: "goal post",
        rgb: [0, 0, 255],
    },
];

/// Exact-match lookup of a mask color; `None` for anything off-palette.
pub fn class_for_rgb(rgb: [u8; 3]) -> Option<u8> {
    PALETTE.iter().find(|e| e.rgb == rgb).map(|e| e.class)
}

/// The mask PNG color for a class.
///
/// # Panics
/// Panics if `class >= CLASS_COUNT` (a programmer error; masks validate their
/// contents on construction).
pub fn rgb_for_class(class: u8) -> [u8; 3] {
    PALETTE[class as usize].rgb
}

/// Human-readable class name.
pub fn class_name(class: u8) -> &'static str {
    PALETTE[class as usize].name
}
