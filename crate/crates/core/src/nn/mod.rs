//! Neural building blocks: dense tensors, packed recurrent layers, the
//! optimizer and gradient checking, plus the tagger models built on them.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod lstm;
pub mod packing;
pub mod tagger;
pub mod tensor;
pub mod train;
pub mod vocab;

pub use tensor::Tensor;

/// Anything that owns named trainable tensors in a fixed order.
pub trait Parameterized {
    fn parameters(&self) -> Vec<(String, &Tensor)>;

    fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn count_parameters(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }

    /// Clones of the parameter tensors, in parameter order.
    fn parameters_owned(&self) -> Vec<Tensor> {
        self.parameters().into_iter().map(|(_, t)| t.clone()).collect()
    }
}
