pub mod pcm;
pub mod priority;
pub mod ri_mc;
pub mod group;
pub mod hierarchy;
pub mod delphi;
pub mod io;
pub mod pipeline;
