//! CEFR difficulty estimation for French text and evaluation of text
//! simplification systems.
//!
//! The building blocks, bottom up:
//! - [`textproc`] and [`readability`]: surface counts and the GFI, FKGL and
//!   ARI scores;
//! - [`calibration`]: a softmax regression turning one score into a label;
//! - [`providers`]: chat and embedding backends (remote or mock) and cosine
//!   similarity;
//! - [`difficulty`]: classifiers and the F1 harness;
//! - [`simplify`]: simplifiers, accuracy / similarity / w-score, and the
//!   iterative driver;
//! - [`corpus`]: dataset loading, splits and sampling;
//! - [`cli`]: the `cefrkit` command line.

pub mod calibration;
pub mod cli;
pub mod corpus;
pub mod difficulty;
pub mod output;
pub mod parallel;
pub mod providers;
pub mod readability;
pub mod scheme;
pub mod simplify;
pub mod softmax;
pub mod textproc;

pub use scheme::{Label, LabelScheme};
