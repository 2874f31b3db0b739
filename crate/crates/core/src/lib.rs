//! Shortlex shellings, growth measures, and aperiodic pattern rules on
//! hyperbolic groups, computed and verified at finite scale.
//!
//! The crate works with a finitely presented group given either by a
//! C'(1/6) small-cancellation presentation (words are resolved by a
//! rewriting oracle) or by an externally validated automaton. On top of the
//! oracle it builds, layer by layer:
//!
//! * metric balls and sphere counts ([`ball`]);
//! * the shortlex automaton and its validation ([`fsa`]);
//! * the growth rate λ, its certified isolating interval, and the shift-
//!   invariant weight vector μ ([`growth`]);
//! * radial shellings of the sphere-at-infinity combinatorics: patches of
//!   horofunction data around a basepoint, with local integrity checks and
//!   pattern dictionaries ([`shelling`]);
//! * the divergence graph on the boundary tree ([`divergence`]);
//! * population counts realizing a prescribed density, matchings between
//!   populated shells, and the mismatch analysis that rules out translation
//!   symmetry ([`population`]);
//! * finite pattern rule sets ("subshift" style constraints) and colorings
//!   ([`sft`]).
//!
//! Everything downstream of the oracle treats group elements as canonical
//! shortlex-geodesic words, so results are deterministic and serializable.

pub mod ball;
pub mod divergence;
pub mod error;
pub mod fsa;
pub mod growth;
pub mod numeric;
pub mod oracle;
pub mod population;
pub mod presentation;
pub mod sft;
pub mod shelling;
pub mod word;

pub use error::{Error, Result};
pub use oracle::{GroupOracle, OracleMode};
pub use presentation::Presentation;
pub use word::{Gen, Word};
