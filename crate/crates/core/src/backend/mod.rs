//! Utterance-level back end: pooling, PCA, normalization, LDA, PLDA and
//! feature fusion.

mod embed;
mod lda;
mod pca;
mod plda;

pub use embed::{
    average_pool, fuse_concat, mean_length_normalize, read_embeddings, write_embeddings,
    Embedding, EmbeddingSet, LengthNorm,
};
pub use lda::{lda_fit, LdaModel};
pub use pca::{pca_fit, PcaModel};
pub use plda::{plda_fit, PldaModel};
