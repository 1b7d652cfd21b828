//! Generative user model and the reset/step environment contract.

mod click;
mod config;
mod embedding;
mod observation;
mod simulator;
mod state;

pub use click::{
    attractiveness, click_probabilities, examination, sample_clicks, sample_slate_clicks,
    slate_relevances,
};
pub use config::{BoredomVariant, Observability, SimulatorConfig};
pub use embedding::{
    generate_catalog, relevance, sample_item, sample_user, Embedding, ITEM_TOPIC_COUNTS,
    USER_TOPIC_COUNTS,
};
pub use observation::{build_observation, full_observation, topic_histogram, timeout_vector, Observation};
pub use simulator::{Simulator, StepInfo, StepOutcome};
pub use state::{apply_boredom, apply_influence, detect_boredom, ClickRecord, SessionState};

pub(crate) use embedding::dot;
