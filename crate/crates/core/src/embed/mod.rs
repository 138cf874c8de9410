//! Exported-model embedding backends, image preprocessing, tokenization and
//! the on-disk embedding store.

mod backend;
mod pipeline;
mod preprocess;
mod store;
mod tokenizer;

pub use backend::{
    embed_image, embed_text, Backend, BackendSpec, TokenizerAssets, IMAGE_ENCODER_FILE,
    TEXT_ENCODER_FILE,
};
pub use pipeline::embed_videos;
pub use preprocess::{load_frame, preprocess_frame, FrameTensor, RgbImage};
pub use store::{read_store, write_store, EmbeddingRecord, EmbeddingStore, STORE_MAGIC};
pub use tokenizer::{ClipTokenizer, END_TOKEN, START_TOKEN};

/// Tokenizes `text` with `backend`'s vocabulary, padded to its `max_tokens`.
pub fn tokenize(backend: &Backend, text: &str) -> crate::Result<Vec<i64>> {
    backend.tokenize(text)
}
