use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const MAX_TOPIC_LEN: usize = 255;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopicError {
    #[error("topic is empty")]
    Empty,
    #[error("topic is {0} bytes (max {MAX_TOPIC_LEN})")]
    TooLong(usize),
    #[error("topic {0:?} contains whitespace")]
    Whitespace(String),
    #[error("topic {0:?} has an empty segment")]
    EmptySegment(String),
}

/// A `/`-separated topic name of 1 to 255 bytes without whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Topic(String);

impl Topic {
    pub fn new(name: &str) -> Result<Topic, TopicError> {
        if name.is_empty() {
            return Err(TopicError::Empty);
        }
        if name.len() > MAX_TOPIC_LEN {
            return Err(TopicError::TooLong(name.len()));
        }
        if name.chars().any(char::is_whitespace) {
            return Err(TopicError::Whitespace(name.to_string()));
        }
        if name.split('/').any(str::is_empty) {
            return Err(TopicError::EmptySegment(name.to_string()));
        }
        Ok(Topic(name.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last_segment(&self) -> &str {
        self.0.rsplit('/').next().unwrap_or(&self.0)
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Topic {
    type Err = TopicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Topic::new(s)
    }
}

impl AsRef<str> for Topic {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Parses a comma-separated topic list; empty input yields an empty list.
pub fn parse_topic_list(s: &str) -> Result<Vec<Topic>, TopicError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(Topic::new)
        .collect()
}
