//! Knowledge graph quality evaluation as an adversarial question-answering
//! game played under incomplete information.
//!
//! Each of two graphs trains a question model and an answer model against
//! itself, then the two exchange only encoded questions, answers, a shared
//! translation embedding and their subgraph encoders. The graph whose answer
//! model scores higher on the other's questions wins.

pub mod answer;
pub mod duel;
pub mod embed;
pub mod encoder;
pub mod gradcheck;
pub mod kg;
pub mod protocol;
pub mod questions;
pub mod synthetic;
pub mod tuners;
