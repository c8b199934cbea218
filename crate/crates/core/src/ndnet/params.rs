/// A set of trainable buffers exposed as flat segments.
///
/// Gradients use the same type as the parameters they belong to, so a
/// gradient set and its parameter set always enumerate segments in the same
/// order with the same lengths.
pub trait Parameters<S> {
    fn segments(&self) -> Vec<&[S]>;

    fn segments_mut(&mut self) -> Vec<&mut [S]>;

    /// Human-readable name per segment, same order as [`Parameters::segments`].
    fn segment_names(&self) -> Vec<String>;

    fn num_params(&self) -> usize {
        self.segments().iter().map(|s| s.len()).sum()
    }
}
