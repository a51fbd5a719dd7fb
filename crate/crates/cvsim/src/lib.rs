//! Staged finite-element simulation of arterial vasospasm development and
//! its mechanical (pressure-based) treatment.
//!
//! The artery is a thick-walled quarter cylinder of a constrained mixture
//! (elastin, two collagen fibre families with recruitment-stretch
//! distributions, and smooth muscle cells with an active response),
//! discretised with mixed Q1P0 hexahedra and driven through four stages:
//! loading, remodelling to homeostasis, vasospasm development, and a
//! treatment pressure ramp with smooth muscle damage.

pub mod band;
pub mod config;
pub mod damage;
pub mod driver;
pub mod element;
pub mod export;
pub mod material;
pub mod mesh;
pub mod oracles;
pub mod remodel;
pub mod solve;
pub mod stent;
pub mod tensor;
