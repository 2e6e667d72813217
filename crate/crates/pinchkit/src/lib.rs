//! Spectral geometry checks for manifolds carrying an almost parallel form.
//!
//! Point clouds on model spaces ([`manifold`]) are discretized into kernel
//! operators on functions and forms ([`operators`]), whose low spectra
//! ([`spectral`]) feed eigenvalue bounds, the eigenfunction approximation map
//! ([`harness`], [`gh`]), the orientability detector ([`orientability`]) and the
//! almost-Kähler checks ([`kahler`]).

// `!(x <= y)` guards are deliberate: they reject NaN along with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the component formulas of the exterior algebra.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::should_implement_trait, clippy::single_range_in_vec_init, clippy::type_complexity)]

pub mod comparison;
pub mod exterior;
pub mod gh;
pub mod harness;
pub mod kahler;
pub mod manifold;
pub mod operators;
pub mod orientability;
pub mod reference;
pub mod report;
pub mod spectral;

/// The guide's chapters, compiled so their snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/exterior.md")]
    mod exterior {}
    #[doc = include_str!("../../../book/src/manifolds.md")]
    mod manifolds {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/pinching.md")]
    mod pinching {}
    #[doc = include_str!("../../../book/src/orientability.md")]
    mod orientability {}
    #[doc = include_str!("../../../book/src/kahler.md")]
    mod kahler {}
    #[doc = include_str!("../../../book/src/comparison.md")]
    mod comparison {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
