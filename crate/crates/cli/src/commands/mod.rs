pub mod fit;
pub mod impacts;
pub mod moran;
pub mod simulate;
