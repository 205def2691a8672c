//! ROUGE scoring and experiment harnesses.

pub mod harness;
pub mod rouge;

pub use harness::{run_analysis, Analysis, Grid, Row, Table};
pub use rouge::{lcs_len, rouge_l, rouge_n, rouge_scores, RougeMode, RougeScore, TRUNCATION_TOKENS};
