//! Calendar dates at day resolution.
//!
//! Dates are held internally as day numbers (days since 1970-01-01, may be
//! negative) so that window arithmetic is plain integer arithmetic. The
//! on-disk form is ISO-8601 `YYYY-MM-DD`; loaders also accept a bare integer
//! day index.

/// Day number of a proleptic Gregorian calendar date relative to 1970-01-01.
///
/// Standard civil-from-days construction; exact for all i32 years.
pub fn day_number(year: i32, month: u32, day: u32) -> i64 {
    let y = i64::from(year) - i64::from(month <= 2);
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400; // [0, 399]
    let m = i64::from(month);
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + i64::from(day) - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy; // [0, 146096]
    era * 146097 + doe - 719468
}

/// Inverse of [`day_number`]: `(year, month, day)` of a day number.
pub fn civil_from_day_number(days: i64) -> (i32, u32, u32) {
    let z = days + 719468;
    let era = if z >= 0 { z } else { z - 146096 } / 146097;
    let doe = z - era * 146097; // [0, 146096]
    let yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365; // [0, 399]
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100); // [0, 365]
    let mp = (5 * doy + 2) / 153; // [0, 11]
    let d = doy - (153 * mp + 2) / 5 + 1; // [1, 31]
    let m = if mp < 10 { mp + 3 } else { mp - 9 }; // [1, 12]
    ((y + i64::from(m <= 2)) as i32, m as u32, d as u32)
}

fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 => {
            let leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
            if leap {
                29
            } else {
                28
            }
        }
        _ => 0,
    }
}

/// Parse a date field: either ISO-8601 `YYYY-MM-DD` or a bare integer day
/// index. Returns the day number, or a description of what went wrong.
pub fn parse_date(text: &str) -> Result<i64, String> {
    let text = text.trim();
    if text.is_empty() {
        return Err("empty date".to_string());
    }
    // Bare integer day index.
    if let Ok(day) = text.parse::<i64>() {
        return Ok(day);
    }
    let parts: Vec<&str> = text.split('-').collect();
    // A leading '-' (negative year) would split differently; not supported.
    if parts.len() != 3 {
        return Err(format!("`{text}` is not an ISO-8601 date (YYYY-MM-DD)"));
    }
    let year: i32 = parts[0]
        .parse()
        .map_err(|_| format!("bad year in `{text}`"))?;
    let month: u32 = parts[1]
        .parse()
        .map_err(|_| format!("bad month in `{text}`"))?;
    let day: u32 = parts[2]
        .parse()
        .map_err(|_| format!("bad day in `{text}`"))?;
    if !(1..=12).contains(&month) {
        return Err(format!("month {month} out of range in `{text}`"));
    }
    if day < 1 || day > days_in_month(year, month) {
        return Err(format!("day {day} out of range in `{text}`"));
    }
    Ok(day_number(year, month, day))
}

/// Format a day number as ISO-8601 `YYYY-MM-DD`.
pub fn format_date(day: i64) -> String {
    let (y, m, d) = civil_from_day_number(day);
    format!("{y:04}-{m:02}-{d:02}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn epoch_is_day_zero() {
        assert_eq!(day_number(1970, 1, 1), 0);
        assert_eq!(civil_from_day_number(0), (1970, 1, 1));
    }

    #[test]
    fn known_dates() {
        assert_eq!(day_number(2000, 3, 1), 11017);
        assert_eq!(day_number(1969, 12, 31), -1);
        assert_eq!(parse_date("2021-02-28").unwrap(), day_number(2021, 2, 28));
        assert_eq!(parse_date("17").unwrap(), 17);
    }

    #[test]
    fn rejects_bad_dates() {
        assert!(parse_date("2021-02-30").is_err());
        assert!(parse_date("2021-13-01").is_err());
        assert!(parse_date("not-a-date").is_err());
        assert!(parse_date("").is_err());
    }

    proptest! {
        #[test]
        fn day_number_inverts_civil(day in -1_000_000i64..1_000_000i64) {
            let (y, m, d) = civil_from_day_number(day);
            prop_assert_eq!(day_number(y, m, d), day);
        }

        // Textual round-trip holds on the parseable domain (year >= 1;
        // negative years have no YYYY-MM-DD form).
        #[test]
        fn iso_text_round_trips(day in -719_162i64..1_000_000i64) {
            prop_assert_eq!(parse_date(&format_date(day)).unwrap(), day);
        }
    }
}
