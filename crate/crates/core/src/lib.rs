//! Witten deformation of the de Rham complex on flat tori: deformed Laplacians,
//! their small spectrum, Morse complexes and the Helffer-Sjöstrand comparison map.

pub mod cli;
pub mod error;
pub mod forms;
pub mod manifold;
pub mod morse;
pub mod ode;
pub mod oscillator;
pub mod spectra;
pub mod whs;

pub use error::{Error, Result};
pub use manifold::{ClosedOneForm, CriticalPoint, SampleManifold, ScalarField};
pub use oscillator::{OscillatorModel, OscillatorSpectrum};
