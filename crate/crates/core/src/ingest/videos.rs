use std::collections::HashSet;
use std::io::BufRead;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{for_each_line, object_with_keys, ParseOptions, Parsed, Reject};
use crate::error::Result;
use crate::ids::SpeakerId;

/// First year with YouTube uploads.
pub const MIN_UPLOAD_YEAR: i32 = 2005;

/// Metadata of one source video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub youtube_id: String,
    pub title: String,
    pub description: String,
    pub upload_date: NaiveDate,
    pub speaker_ids: Vec<SpeakerId>,
}

impl VideoMeta {
    pub fn upload_year(&self) -> i32 {
        self.upload_date.year()
    }
}

const VIDEO_KEYS: [&str; 5] = ["youtube_id", "title", "description", "upload_date", "speaker_ids"];

fn string_field<'a>(
    map: &'a serde_json::Map<String, serde_json::Value>,
    key: &str,
) -> std::result::Result<&'a str, String> {
    map[key].as_str().ok_or_else(|| format!("{key} must be a string"))
}

/// Accepts `YYYY-MM-DD`, optionally followed by an RFC 3339 time part.
fn parse_upload_date(s: &str) -> std::result::Result<NaiveDate, String> {
    let date_part = match s.split_once('T') {
        Some((date, _)) => date,
        None => s,
    };
    NaiveDate::parse_from_str(date_part, "%Y-%m-%d").map_err(|_| format!("invalid upload_date \"{s}\""))
}

fn video_from_line(line: &str, opts: &ParseOptions) -> std::result::Result<VideoMeta, String> {
    let map = object_with_keys(line, &VIDEO_KEYS)?;
    let youtube_id = string_field(&map, "youtube_id")?.trim();
    if youtube_id.is_empty() {
        return Err("empty youtube_id".into());
    }
    let title = string_field(&map, "title")?;
    let description = string_field(&map, "description")?;
    let upload_date = parse_upload_date(string_field(&map, "upload_date")?)?;
    if !(MIN_UPLOAD_YEAR..=opts.current_year).contains(&upload_date.year()) {
        return Err("upload year out of range".into());
    }
    let speaker_ids = map["speaker_ids"]
        .as_array()
        .ok_or_else(|| "speaker_ids must be an array".to_string())?
        .iter()
        .map(|v| {
            v.as_str()
                .filter(|s| !s.trim().is_empty())
                .map(|s| SpeakerId::new(s.trim()))
                .ok_or_else(|| "speaker_ids must hold non-empty strings".to_string())
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(VideoMeta {
        youtube_id: youtube_id.to_owned(),
        title: title.to_owned(),
        description: description.to_owned(),
        upload_date,
        speaker_ids,
    })
}

/// Parses video metadata JSON Lines. A repeated `youtube_id` keeps the first
/// occurrence and rejects the rest.
pub fn parse_video_meta<R: BufRead>(reader: R, input_file: &str, opts: &ParseOptions) -> Result<Parsed<VideoMeta>> {
    let mut parsed = Parsed::default();
    let mut seen = HashSet::new();
    for_each_line(reader, |line, text| {
        let outcome = text.and_then(|t| video_from_line(t, opts)).and_then(|video| {
            if seen.insert(video.youtube_id.clone()) {
                Ok(video)
            } else {
                Err(format!("duplicate youtube_id \"{}\"", video.youtube_id))
            }
        });
        match outcome {
            Ok(video) => parsed.records.push(video),
            Err(reason) => parsed.rejects.push(Reject {
                input_file: input_file.to_owned(),
                line,
                reason,
            }),
        }
    })?;
    Ok(parsed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(input: &str) -> Parsed<VideoMeta> {
        parse_video_meta(input.as_bytes(), "videos.jsonl", &ParseOptions { current_year: 2026 }).unwrap()
    }

    #[test]
    fn valid_line_passes_through() {
        let p = parse(
            r#"{"youtube_id":"abc","title":"Interview 2014","description":"d","upload_date":"2014-05-01","speaker_ids":["id1","id2"]}"#,
        );
        assert!(p.rejects.is_empty());
        let v = &p.records[0];
        assert_eq!(v.youtube_id, "abc");
        assert_eq!(v.upload_year(), 2014);
        assert_eq!(v.speaker_ids, vec![SpeakerId::from("id1"), SpeakerId::from("id2")]);
    }

    #[test]
    fn pre_2005_upload_is_rejected() {
        let p =
            parse(r#"{"youtube_id":"abc","title":"t","description":"d","upload_date":"1999-01-01","speaker_ids":[]}"#);
        assert_eq!(p.rejects[0].reason, "upload year out of range");
    }

    #[test]
    fn duplicate_youtube_id_keeps_first() {
        let input = concat!(
            r#"{"youtube_id":"abc","title":"first","description":"d","upload_date":"2014-05-01","speaker_ids":[]}"#,
            "\n",
            r#"{"youtube_id":"abc","title":"second","description":"d","upload_date":"2015-05-01","speaker_ids":[]}"#,
            "\n"
        );
        let p = parse(input);
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.records[0].title, "first");
        assert_eq!(p.rejects.len(), 1);
        assert_eq!(p.rejects[0].line, 2);
        assert!(p.rejects[0].reason.starts_with("duplicate youtube_id"));
    }

    #[test]
    fn rfc3339_timestamp_is_accepted() {
        let p = parse(
            r#"{"youtube_id":"x","title":"t","description":"d","upload_date":"2016-03-02T10:00:00Z","speaker_ids":["a"]}"#,
        );
        assert_eq!(p.records[0].upload_year(), 2016);
    }
}
