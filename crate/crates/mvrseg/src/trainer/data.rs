//! Dataset file formats: classification TSV and blank-line-separated
//! tagging blocks.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Tagging,
}

/// One example: raw text plus label ids (one for classification, one
/// per word for tagging).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawExample {
    pub text: String,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub task: Task,
    pub examples: Vec<RawExample>,
    /// Label names in id order (order of first appearance).
    pub label_names: Vec<String>,
}

impl Dataset {
    /// Parse from text, building the label vocabulary as labels appear.
    pub fn parse(task: Task, text: &str) -> Result<Self> {
        Self::parse_inner(task, text, Vec::new(), false)
    }

    /// Parse against a fixed label vocabulary (for dev/test splits);
    /// unknown labels are an error.
    pub fn parse_with_labels(task: Task, text: &str, label_names: Vec<String>) -> Result<Self> {
        Self::parse_inner(task, text, label_names, true)
    }

    fn parse_inner(
        task: Task,
        text: &str,
        mut label_names: Vec<String>,
        frozen: bool,
    ) -> Result<Self> {
        let mut label_id = |name: &str, line: usize| -> Result<usize> {
            if let Some(i) = label_names.iter().position(|l| l == name) {
                return Ok(i);
            }
            if frozen {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown label {name:?}"),
                });
            }
            label_names.push(name.to_string());
            Ok(label_names.len() - 1)
        };

        let mut examples = Vec::new();
        match task {
            Task::Classification => {
                for (idx, line) in text.lines().enumerate() {
                    if line.is_empty() {
                        continue;
                    }
                    let lineno = idx + 1;
                    let (label, sentence) =
                        line.split_once('\t').ok_or_else(|| Error::Parse {
                            line: lineno,
                            msg: format!("expected \"label\\ttext\", got {line:?}"),
                        })?;
                    let id = label_id(label, lineno)?;
                    examples.push(RawExample {
                        text: sentence.to_string(),
                        labels: vec![id],
                    });
                }
            }
            Task::Tagging => {
                let mut words: Vec<String> = Vec::new();
                let mut tags: Vec<usize> = Vec::new();
                for (idx, line) in text.lines().chain(std::iter::once("")).enumerate() {
                    let lineno = idx + 1;
                    if line.is_empty() {
                        if !words.is_empty() {
                            examples.push(RawExample {
                                text: words.join(" "),
                                labels: std::mem::take(&mut tags),
                            });
                            words.clear();
                        }
                        continue;
                    }
                    let (word, tag) = line.split_once('\t').ok_or_else(|| Error::Parse {
                        line: lineno,
                        msg: format!("expected \"word\\ttag\", got {line:?}"),
                    })?;
                    if word.contains(char::is_whitespace) {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: format!("word contains whitespace: {word:?}"),
                        });
                    }
                    words.push(word.to_string());
                    tags.push(label_id(tag, lineno)?);
                }
            }
        }
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Dataset {
            task,
            examples,
            label_names,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_classification() {
        let d = Dataset::parse(Task::Classification, "pos\tgood film\nneg\tbad film\npos\tfine\n")
            .unwrap();
        assert_eq!(d.label_names, vec!["pos", "neg"]);
        assert_eq!(d.examples.len(), 3);
        assert_eq!(d.examples[1].labels, vec![1]);
        assert_eq!(d.examples[2].text, "fine");
    }

    #[test]
    fn parse_tagging_blocks() {
        let text = "the\tDET\ncat\tNOUN\n\nruns\tVERB\n";
        let d = Dataset::parse(Task::Tagging, text).unwrap();
        assert_eq!(d.examples.len(), 2);
        assert_eq!(d.examples[0].text, "the cat");
        assert_eq!(d.examples[0].labels, vec![0, 1]);
        assert_eq!(d.examples[1].labels, vec![2]);
    }

    #[test]
    fn frozen_labels_reject_unknown() {
        let err = Dataset::parse_with_labels(
            Task::Classification,
            "new\tx\n",
            vec!["pos".to_string(), "neg".to_string()],
        );
        assert!(matches!(err, Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_dataset_errors() {
        assert!(matches!(
            Dataset::parse(Task::Classification, "\n\n"),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = Dataset::parse(Task::Classification, "pos\tok\nbroken line\n");
        match err {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
