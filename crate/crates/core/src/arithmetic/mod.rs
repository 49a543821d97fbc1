//! Arithmetic of the base rotation: continued fractions, Ostrowski digits,
//! Diophantine witnesses, dynamical partitions and orbit discrepancy.

pub mod cf;
pub mod circle;
pub mod diophantine;
pub mod discrepancy;
pub mod ostrowski;
pub mod partition;

pub use cf::{continued_fraction, AlphaSource, RotationNumber};
pub use circle::{Arc, CirclePoint, FixedAlpha, OrbitWalker};
pub use diophantine::{diophantine_witness, DiophantineClass};
pub use discrepancy::{discrepancy_check, orbit_count, DiscrepancyReport};
pub use ostrowski::{ostrowski_expand, OstrowskiDigits};
pub use partition::{partition_ik, DynamicalPartition, Tower, TowerPartition};
