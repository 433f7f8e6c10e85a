use crate::transcript::ActionFlags;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionStatus {
    /// Bare in-range integer.
    Valid,
    /// Bare integer outside the legal range; clamped.
    OutOfRange,
    /// Extra text around the number; first integer extracted and clamped.
    FormatViolation,
    /// No integer at all; midpoint of the range used.
    Unparseable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidatedAction {
    pub value: u32,
    pub status: ActionStatus,
    /// Whether the value had to be pulled into the legal range.
    pub clamped: bool,
}

impl ValidatedAction {
    pub fn is_valid(&self) -> bool {
        self.status == ActionStatus::Valid
    }

    /// Whether the text contained any integer at all.
    pub fn has_number(&self) -> bool {
        self.status != ActionStatus::Unparseable
    }

    pub fn flags(&self) -> ActionFlags {
        ActionFlags {
            clamped: self.clamped,
            format_violation: matches!(
                self.status,
                ActionStatus::FormatViolation | ActionStatus::Unparseable
            ),
            ..ActionFlags::default()
        }
    }
}

/// Interprets a model response as an action in `[lo, hi]`.
///
/// A bare integer (surrounding whitespace allowed) is taken as is, clamped if
/// needed. Otherwise the first integer in the text is extracted and clamped;
/// with no integer at all the midpoint of the range is returned.
pub fn validate_action_text(text: &str, (lo, hi): (i64, i64)) -> ValidatedAction {
    let trimmed = text.trim();
    let (raw, status) = match parse_bare_integer(trimmed) {
        Some(v) => (
            Some(v),
            if (lo..=hi).contains(&v) {
                ActionStatus::Valid
            } else {
                ActionStatus::OutOfRange
            },
        ),
        None => match first_integer(trimmed) {
            Some(v) => (Some(v), ActionStatus::FormatViolation),
            None => (None, ActionStatus::Unparseable),
        },
    };
    match raw {
        Some(v) => {
            let c = v.clamp(lo, hi);
            ValidatedAction {
                value: c as u32,
                status,
                clamped: c != v,
            }
        }
        None => ValidatedAction {
            value: ((lo + hi) / 2) as u32,
            status,
            clamped: false,
        },
    }
}

fn parse_bare_integer(s: &str) -> Option<i64> {
    let (neg, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some(saturating_digits(digits, neg))
}

fn first_integer(s: &str) -> Option<i64> {
    let bytes = s.as_bytes();
    let start = bytes.iter().position(u8::is_ascii_digit)?;
    let end = bytes[start..]
        .iter()
        .position(|b| !b.is_ascii_digit())
        .map_or(bytes.len(), |n| start + n);
    let neg = start > 0 && bytes[start - 1] == b'-';
    Some(saturating_digits(&s[start..end], neg))
}

fn saturating_digits(digits: &str, neg: bool) -> i64 {
    let mag = digits.bytes().fold(0i64, |acc, b| {
        acc.saturating_mul(10).saturating_add(i64::from(b - b'0'))
    });
    if neg {
        -mag
    } else {
        mag
    }
}
