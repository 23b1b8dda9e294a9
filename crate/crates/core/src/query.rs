use serde::{Deserialize, Serialize};

/// Lifecycle of a dominant-label query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum QueryStatus {
    Pending,
    Answered { class_id: u16 },
    /// Rejected as unanswerable; costs no click.
    Skipped,
}

/// One dominant-label query over a snapshot of superpixel pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: u64,
    pub image_id: u32,
    pub round: u32,
    /// Ascending pixel indices.
    pub pixels: Vec<u32>,
    #[serde(flatten)]
    pub status: QueryStatus,
}

impl QueryRecord {
    pub fn answer(&self) -> Option<u16> {
        match self.status {
            QueryStatus::Answered { class_id } => Some(class_id),
            _ => None,
        }
    }

    pub fn is_pending(&self) -> bool {
        self.status == QueryStatus::Pending
    }

    pub fn clicks(&self) -> u32 {
        u32::from(self.answer().is_some())
    }
}
