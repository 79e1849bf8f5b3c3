//! Collective-perception toolkit for V2X-connected road traffic.
//!
//! The crate models the pipeline a connected vehicle runs when it consumes
//! perception data broadcast by another ITS station (a roadside unit or a
//! second vehicle):
//!
//! 1. [`cpm`] — data model and bit-exact binary codec for CPM-style messages
//!    with quantized confidence encoding.
//! 2. [`geometry`] — SE(2) pose algebra and unscented-transform propagation
//!    of perception + self-localisation uncertainty between station frames.
//! 3. [`tracker`] — GM-PHD multi-road-user tracker with measurement-driven
//!    birth and persistent track identities, one instance per object class.
//! 4. [`planner`] — grid cost-map construction from tracked/predicted road
//!    users and hybrid A* path planning with give-way/overtake behaviors.
//! 5. [`sim`] — deterministic scenario engine running the full 10 Hz
//!    perceive → encode → channel → decode → transform → track → plan loop,
//!    plus the Test 1/Test 2 uncertainty sweeps with a Monte-Carlo oracle.

pub mod cpm;
pub mod geometry;
pub mod planner;
pub mod sim;
pub mod tracker;
