use std::fs::File;
use std::io::{BufRead, BufReader, Lines};
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::{Result, TaasError};

/// A source document with its reference summary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DocumentPair {
    pub id: String,
    pub document: String,
    pub summary: String,
    /// Set when the record carried no `summary` field.
    pub inference_only: bool,
}

impl DocumentPair {
    pub fn new(id: impl Into<String>, document: impl Into<String>, summary: impl Into<String>) -> Self {
        DocumentPair {
            id: id.into(),
            document: document.into(),
            summary: summary.into(),
            inference_only: false,
        }
    }
}

/// Streaming reader over a JSONL corpus; yields one result per non-blank line.
pub struct JsonlReader {
    path: PathBuf,
    lines: Lines<BufReader<File>>,
    line_no: usize,
}

impl Iterator for JsonlReader {
    type Item = Result<DocumentPair>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(parse_record(&line, self.line_no).map_err(|reason| TaasError::Record {
                path: self.path.clone(),
                line: self.line_no,
                reason,
            }));
        }
    }
}

/// Opens `path` as a stream of [`DocumentPair`]s in file order.
///
/// Each line must be a JSON object with a string `document`, and optionally a
/// string `summary` and an `id` (string or number). Missing ids become the
/// 1-based line number.
pub fn load_jsonl(path: &Path) -> Result<JsonlReader> {
    let file = File::open(path)?;
    Ok(JsonlReader {
        path: path.to_path_buf(),
        lines: BufReader::new(file).lines(),
        line_no: 0,
    })
}

/// Reads the whole file, failing on the first bad record.
pub fn read_jsonl(path: &Path) -> Result<Vec<DocumentPair>> {
    load_jsonl(path)?.collect()
}

fn parse_record(line: &str, line_no: usize) -> std::result::Result<DocumentPair, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("malformed JSON: {e}"))?;
    let obj = value.as_object().ok_or_else(|| "record is not a JSON object".to_string())?;
    let document = match obj.get("document") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        Some(Value::String(_)) => return Err("`document` is empty".into()),
        Some(_) => return Err("`document` is not a string".into()),
        None => return Err("missing `document` field".into()),
    };
    let (summary, inference_only) = match obj.get("summary") {
        Some(Value::String(s)) => (s.clone(), false),
        Some(Value::Null) | None => (String::new(), true),
        Some(_) => return Err("`summary` is not a string".into()),
    };
    let id = match obj.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(Value::Null) | None => line_no.to_string(),
        Some(_) => return Err("`id` must be a string or number".into()),
    };
    Ok(DocumentPair {
        id,
        document,
        summary,
        inference_only,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file_with(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_file_is_empty_stream() {
        let f = file_with("");
        assert_eq!(read_jsonl(f.path()).unwrap(), vec![]);
    }

    #[test]
    fn preserves_order_and_generates_ids() {
        let f = file_with(
            "{\"document\": \"one\", \"summary\": \"1\"}\n\
             {\"document\": \"two\", \"summary\": \"2\", \"id\": \"b\"}\n\
             \n\
             {\"document\": \"three\", \"summary\": \"3\", \"id\": 7}\n",
        );
        let pairs = read_jsonl(f.path()).unwrap();
        let ids: Vec<_> = pairs.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["1", "b", "7"]);
        assert_eq!(pairs[2].document, "three");
    }

    #[test]
    fn missing_summary_is_inference_only() {
        let f = file_with("{\"document\": \"text here\", \"id\": \"x\"}\n");
        let pairs = read_jsonl(f.path()).unwrap();
        assert_eq!(pairs[0].summary, "");
        assert!(pairs[0].inference_only);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = file_with("{\"document\": \"ok\", \"summary\": \"s\"}\n{not json\n");
        let err = read_jsonl(f.path()).unwrap_err();
        assert!(matches!(err, TaasError::Record { line: 2, .. }), "{err}");
    }

    #[test]
    fn missing_document_is_rejected_with_diagnostic() {
        let f = file_with("{\"summary\": \"s\"}\n");
        let results: Vec<_> = load_jsonl(f.path()).unwrap().collect();
        let err = results[0].as_ref().unwrap_err();
        assert!(err.to_string().contains("missing `document`"), "{err}");
    }
}
