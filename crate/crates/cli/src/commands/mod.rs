pub mod estimate;
pub mod model_fit;
pub mod simulate;
pub mod split_eval;
