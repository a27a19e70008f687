// SPDX-License-Identifier: MIT OR Apache-2.0

//! Locality statistics over score grids and functional-component bands.

pub mod components;
pub mod locality;
pub mod profile;

pub use components::{
    derive_components, half_max_band, Band, BandMode, ComponentFractions, ComponentSource, ComponentSpec, Fraction,
};
pub use locality::{locality_report, KindLocality, LocalityReport, RegionShares, DEFAULT_THRESHOLD};
pub use profile::{designated_positions, layer_profile, KindProfile, LayerProfile};
