use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One shot as an inclusive, 0-based frame interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shot {
    pub begin: u64,
    pub end: u64,
}

/// Ordered, non-overlapping shots of one video.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotAnnotation {
    shots: Vec<Shot>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionKind {
    Hard,
    Gradual,
}

/// A transition between two consecutive shots. Hard cuts have
/// `lo == hi == end` of the outgoing shot; gradual transitions span
/// `[end, next_begin - 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransitionSpan {
    pub kind: TransitionKind,
    pub lo: u64,
    pub hi: u64,
}

impl TransitionSpan {
    pub fn hard(at: u64) -> Self {
        TransitionSpan {
            kind: TransitionKind::Hard,
            lo: at,
            hi: at,
        }
    }

    pub fn contains(&self, frame: u64) -> bool {
        (self.lo..=self.hi).contains(&frame)
    }
}

impl ShotAnnotation {
    /// Validates ordering: `begin <= end` and `begin_{k+1} > end_k`.
    pub fn new(shots: Vec<Shot>) -> Result<Self> {
        for (k, s) in shots.iter().enumerate() {
            check_shot(k + 1, s, k.checked_sub(1).map(|p| &shots[p]))?;
        }
        Ok(ShotAnnotation { shots })
    }

    pub fn from_pairs(pairs: &[(u64, u64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(begin, end)| Shot { begin, end }).collect())
    }

    pub fn shots(&self) -> &[Shot] {
        &self.shots
    }

    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    /// Index of the last annotated frame plus one.
    pub fn frame_count(&self) -> u64 {
        self.shots.last().map_or(0, |s| s.end + 1)
    }

    pub fn transitions(&self) -> Vec<TransitionSpan> {
        derive_transitions(self)
    }
}

fn check_shot(line: usize, s: &Shot, prev: Option<&Shot>) -> Result<()> {
    if s.begin > s.end {
        return Err(Error::Annotation {
            line,
            detail: format!("shot begins at {} after it ends at {}", s.begin, s.end),
        });
    }
    if let Some(p) = prev {
        if s.begin <= p.end {
            return Err(Error::Annotation {
                line,
                detail: format!("shot begins at {} but the previous shot ends at {}", s.begin, p.end),
            });
        }
    }
    Ok(())
}

/// Parses one `begin end` pair per line; blank lines are skipped and
/// reported line numbers are 1-based.
pub fn parse_annotation(text: &str) -> Result<ShotAnnotation> {
    let mut shots: Vec<Shot> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Annotation {
                line,
                detail: format!("expected two frame numbers, found {} tokens", toks.len()),
            });
        }
        let num = |t: &str| {
            t.parse::<u64>().map_err(|_| Error::Annotation {
                line,
                detail: format!("`{t}` is not a non-negative integer"),
            })
        };
        let shot = Shot {
            begin: num(toks[0])?,
            end: num(toks[1])?,
        };
        check_shot(line, &shot, shots.last())?;
        shots.push(shot);
    }
    Ok(ShotAnnotation { shots })
}

pub fn write_annotation(ann: &ShotAnnotation) -> String {
    let mut out = String::new();
    for s in &ann.shots {
        let _ = writeln!(out, "{} {}", s.begin, s.end);
    }
    out
}

pub fn derive_transitions(ann: &ShotAnnotation) -> Vec<TransitionSpan> {
    ann.shots
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            if b.begin == a.end + 1 {
                TransitionSpan::hard(a.end)
            } else {
                TransitionSpan {
                    kind: TransitionKind::Gradual,
                    lo: a.end,
                    hi: b.begin - 1,
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reversed_shot_reports_line() {
        match parse_annotation("\n10 5\n") {
            Err(Error::Annotation { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overlap_and_garbage_are_rejected() {
        assert!(parse_annotation("0 10\n10 20\n").is_err());
        assert!(parse_annotation("0 x\n").is_err());
        assert!(parse_annotation("0 -1\n").is_err());
        assert!(parse_annotation("0 1 2\n").is_err());
    }
}
