//! Symbol-level downlink simulation of bit-plane image transmission.

mod bitplane;
mod frame;
mod qam;

pub use bitplane::{combine_bit_planes, split_bit_planes, BitPlaneSource, BITS_PER_PIXEL};
pub use frame::{transmit_frame, Equalizer, FrameOptions, FrameResult, UNDETECTABLE_GAIN};
pub use qam::{Modulated, QamConstellation};
