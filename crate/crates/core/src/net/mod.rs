//! CNN model representation, dataset ingestion and exact quantized inference.

pub mod dataset;
pub mod infer;
pub mod layer;
pub mod model;

pub use dataset::{load_cifar10, load_dataset, load_mnist, LabeledImage, RawImages};
pub use infer::{accuracy, argmax, infer_exact, ExactOutput};
pub use layer::{Layer, LayerDesc, LayerKind};
pub use model::{load_model, save_model, Mean, NetworkModel, Preprocess};
