use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{
    BankFile, ContactTypeTree, CorpusError, LabeledTicket, ReplyTemplateBank, Ticket,
};

pub const COLUMNS: &[&str] = &[
    "id",
    "message",
    "created_at",
    "product_type",
    "user_type",
    "country",
    "city",
    "eta_minutes",
    "trip_status",
    "has_trip",
    "contact_type",
    "reply_template",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    Delimited,
    JsonLines,
}

impl DataFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DataFormat::Delimited => "csv",
            DataFormat::JsonLines => "jsonl",
        }
    }
}

impl FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "delimited" | "csv" => Ok(DataFormat::Delimited),
            "json-lines" | "jsonl" => Ok(DataFormat::JsonLines),
            other => Err(format!("unknown data format {other:?} (expected delimited or json-lines)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub records: Vec<LabeledTicket>,
    /// Columns (or JSON keys) that were present but not part of the schema.
    pub unknown_columns: Vec<String>,
    /// Number of ignored unknown-field occurrences.
    pub warnings: usize,
}

pub fn load_dataset(
    path: &Path,
    format: DataFormat,
    tree: &ContactTypeTree,
    bank: &ReplyTemplateBank,
) -> Result<LoadedDataset, CorpusError> {
    match format {
        DataFormat::Delimited => load_delimited(path, tree, bank),
        DataFormat::JsonLines => load_json_lines(path, tree, bank),
    }
}

fn load_delimited(
    path: &Path,
    tree: &ContactTypeTree,
    bank: &ReplyTemplateBank,
) -> Result<LoadedDataset, CorpusError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let mut index = HashMap::new();
    let mut unknown = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if COLUMNS.contains(&h) {
            index.insert(h.to_string(), i);
        } else {
            unknown.push(h.to_string());
        }
    }
    for &c in COLUMNS {
        if !index.contains_key(c) {
            return Err(CorpusError::MissingColumn(c.to_string()));
        }
    }

    let mut records = Vec::new();
    let mut warnings = 0;
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let get = |c: &str| row.get(index[c]).unwrap_or("");
        warnings += unknown.len();
        let eta = get("eta_minutes");
        let fields = RawFields {
            id: get("id").to_string(),
            message: get("message").to_string(),
            created_at: get("created_at").to_string(),
            product_type: get("product_type").to_string(),
            user_type: get("user_type").to_string(),
            country: get("country").to_string(),
            city: get("city").to_string(),
            eta_minutes: if eta.trim().is_empty() {
                None
            } else {
                Some(eta.trim().parse::<f64>().map_err(|_| CorpusError::Malformed {
                    line,
                    message: format!("eta_minutes {eta:?} is not a number"),
                })?)
            },
            trip_status: get("trip_status").to_string(),
            has_trip: parse_bool(get("has_trip")).ok_or_else(|| CorpusError::Malformed {
                line,
                message: format!("has_trip {:?} is not a boolean", get("has_trip")),
            })?,
            contact_type: get("contact_type").to_string(),
            reply_template: get("reply_template").to_string(),
        };
        records.push(fields.into_labeled(line, tree, bank)?);
    }
    Ok(LoadedDataset { records, unknown_columns: unknown, warnings })
}

fn load_json_lines(
    path: &Path,
    tree: &ContactTypeTree,
    bank: &ReplyTemplateBank,
) -> Result<LoadedDataset, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    let mut unknown: Vec<String> = Vec::new();
    let mut warnings = 0;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: Map<String, Value> = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: format!("invalid JSON object: {e}"),
        })?;
        for &c in COLUMNS {
            if !obj.contains_key(c) {
                return Err(CorpusError::MissingColumn(c.to_string()));
            }
        }
        for k in obj.keys() {
            if !COLUMNS.contains(&k.as_str()) {
                warnings += 1;
                if !unknown.contains(k) {
                    unknown.push(k.clone());
                }
            }
        }
        let bad = |field: &str, want: &str| CorpusError::Malformed {
            line: line_no,
            message: format!("field {field:?} must be {want}"),
        };
        let text = |field: &str| -> Result<String, CorpusError> {
            match &obj[field] {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                _ => Err(bad(field, "a string")),
            }
        };
        let eta_minutes = match &obj["eta_minutes"] {
            Value::Null => None,
            Value::Number(n) => Some(n.as_f64().ok_or_else(|| bad("eta_minutes", "a number"))?),
            Value::String(s) if s.is_empty() => None,
            _ => return Err(bad("eta_minutes", "a number or null")),
        };
        let has_trip = match &obj["has_trip"] {
            Value::Bool(b) => *b,
            Value::String(s) => parse_bool(s).ok_or_else(|| bad("has_trip", "a boolean"))?,
            _ => return Err(bad("has_trip", "a boolean")),
        };
        let fields = RawFields {
            id: text("id")?,
            message: text("message")?,
            created_at: text("created_at")?,
            product_type: text("product_type")?,
            user_type: text("user_type")?,
            country: text("country")?,
            city: text("city")?,
            eta_minutes,
            trip_status: text("trip_status")?,
            has_trip,
            contact_type: text("contact_type")?,
            reply_template: text("reply_template")?,
        };
        records.push(fields.into_labeled(line_no, tree, bank)?);
    }
    Ok(LoadedDataset { records, unknown_columns: unknown, warnings })
}

struct RawFields {
    id: String,
    message: String,
    created_at: String,
    product_type: String,
    user_type: String,
    country: String,
    city: String,
    eta_minutes: Option<f64>,
    trip_status: String,
    has_trip: bool,
    contact_type: String,
    reply_template: String,
}

impl RawFields {
    fn into_labeled(
        self,
        line: usize,
        tree: &ContactTypeTree,
        bank: &ReplyTemplateBank,
    ) -> Result<LabeledTicket, CorpusError> {
        let created_at = DateTime::parse_from_rfc3339(self.created_at.trim())
            .map_err(|e| CorpusError::Malformed {
                line,
                message: format!("created_at {:?} is not ISO-8601: {e}", self.created_at),
            })?
            .with_timezone(&Utc);
        let contact_type = tree
            .lookup(&self.contact_type)
            .ok_or(CorpusError::UnknownContactType { line, value: self.contact_type.clone() })?;
        let reply_template = bank
            .lookup(&self.reply_template)
            .ok_or(CorpusError::UnknownTemplate { line, value: self.reply_template.clone() })?;
        let ticket = Ticket {
            id: self.id,
            message: self.message,
            created_at,
            product_type: self.product_type,
            user_type: self.user_type,
            country: self.country,
            city: self.city,
            eta_minutes: self.eta_minutes,
            trip_status: self.trip_status,
            has_trip: self.has_trip,
        };
        ticket.validate().map_err(|e| CorpusError::Malformed { line, message: e.to_string() })?;
        Ok(LabeledTicket { ticket, contact_type, reply_template })
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

fn csv_err(e: csv::Error) -> CorpusError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CorpusError::Io(io),
        kind => CorpusError::Malformed { line, message: format!("{kind:?}") },
    }
}

fn record_values(lt: &LabeledTicket, tree: &ContactTypeTree, bank: &ReplyTemplateBank) -> [String; 12] {
    let t = &lt.ticket;
    [
        t.id.clone(),
        t.message.clone(),
        t.created_at.to_rfc3339_opts(SecondsFormat::Secs, true),
        t.product_type.clone(),
        t.user_type.clone(),
        t.country.clone(),
        t.city.clone(),
        t.eta_minutes.map(|e| e.to_string()).unwrap_or_default(),
        t.trip_status.clone(),
        t.has_trip.to_string(),
        tree.id(lt.contact_type).to_string(),
        bank.id(lt.reply_template).to_string(),
    ]
}

pub fn write_dataset(
    path: &Path,
    format: DataFormat,
    data: &[LabeledTicket],
    tree: &ContactTypeTree,
    bank: &ReplyTemplateBank,
) -> Result<(), CorpusError> {
    match format {
        DataFormat::Delimited => {
            // Non-numeric fields (the message among them) are quoted; embedded quotes are doubled.
            let mut w = csv::WriterBuilder::new()
                .quote_style(csv::QuoteStyle::NonNumeric)
                .from_path(path)
                .map_err(csv_err)?;
            w.write_record(COLUMNS).map_err(csv_err)?;
            for lt in data {
                w.write_record(&record_values(lt, tree, bank)).map_err(csv_err)?;
            }
            w.flush()?;
        }
        DataFormat::JsonLines => {
            let mut w = BufWriter::new(File::create(path)?);
            for lt in data {
                let t = &lt.ticket;
                let v = serde_json::json!({
                    "id": t.id,
                    "message": t.message,
                    "created_at": t.created_at.to_rfc3339_opts(SecondsFormat::Secs, true),
                    "product_type": t.product_type,
                    "user_type": t.user_type,
                    "country": t.country,
                    "city": t.city,
                    "eta_minutes": t.eta_minutes,
                    "trip_status": t.trip_status,
                    "has_trip": t.has_trip,
                    "contact_type": tree.id(lt.contact_type),
                    "reply_template": bank.id(lt.reply_template),
                });
                serde_json::to_writer(&mut w, &v)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub const TREE_FILE: &str = "tree.json";
pub const BANK_FILE: &str = "templates.json";

/// Writes `tree.json`, `templates.json` and `tickets.<ext>` into `dir`.
pub fn save_corpus_dir(
    dir: &Path,
    format: DataFormat,
    tree: &ContactTypeTree,
    bank: &ReplyTemplateBank,
    data: &[LabeledTicket],
) -> Result<(), CorpusError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(TREE_FILE), serde_json::to_string_pretty(tree)?)?;
    fs::write(dir.join(BANK_FILE), serde_json::to_string_pretty(&bank.to_file(tree))?)?;
    write_dataset(&dir.join(format!("tickets.{}", format.extension())), format, data, tree, bank)
}

pub fn load_corpus_dir(
    dir: &Path,
    format: DataFormat,
) -> Result<(ContactTypeTree, ReplyTemplateBank, LoadedDataset), CorpusError> {
    let tree: ContactTypeTree = serde_json::from_str(&fs::read_to_string(dir.join(TREE_FILE))?)?;
    let bank_file: BankFile = serde_json::from_str(&fs::read_to_string(dir.join(BANK_FILE))?)?;
    let bank = ReplyTemplateBank::from_file(bank_file, &tree)?;
    let data = load_dataset(&dir.join(format!("tickets.{}", format.extension())), format, &tree, &bank)?;
    Ok((tree, bank, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, GeneratorSpec};

    fn corpus() -> crate::corpus::Corpus {
        generate_corpus(&GeneratorSpec { ticket_count: 40, html_rate: 0.2, ..Default::default() }, 9).unwrap()
    }

    #[test]
    fn header_only_file_is_empty() {
        let c = corpus();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(&p, COLUMNS.join(",") + "\n").unwrap();
        let d = load_dataset(&p, DataFormat::Delimited, &c.tree, &c.bank).unwrap();
        assert!(d.records.is_empty());
    }

    #[test]
    fn one_row_with_quotes() {
        let c = corpus();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let ct = c.tree.id(c.tickets[0].contact_type);
        let rt = c.bank.id(c.tickets[0].reply_template);
        fs::write(
            &p,
            format!(
                "{},extra\nT1,\"my \"\"driver\"\", late\",2018-02-03T04:05:06Z,standard,rider,us,austin,4.5,completed,true,{ct},{rt},zzz\n",
                COLUMNS.join(",")
            ),
        )
        .unwrap();
        let d = load_dataset(&p, DataFormat::Delimited, &c.tree, &c.bank).unwrap();
        assert_eq!(d.records.len(), 1);
        assert_eq!(d.unknown_columns, vec!["extra".to_string()]);
        assert_eq!(d.warnings, 1);
        let t = &d.records[0].ticket;
        assert_eq!(t.message, "my \"driver\", late");
        assert_eq!(t.eta_minutes, Some(4.5));
        assert!(t.has_trip);
        assert_eq!(d.records[0].contact_type, c.tickets[0].contact_type);
    }

    #[test]
    fn unknown_contact_type_names_line_and_value() {
        let c = corpus();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(
            &p,
            format!(
                "{}\nT1,hello,2018-02-03T04:05:06Z,standard,rider,us,austin,,none,false,CT999,RT0\n",
                COLUMNS.join(",")
            ),
        )
        .unwrap();
        let err = load_dataset(&p, DataFormat::Delimited, &c.tree, &c.bank).unwrap_err();
        match err {
            CorpusError::UnknownContactType { line, value } => {
                assert_eq!(line, 2);
                assert_eq!(value, "CT999");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_column_reported() {
        let c = corpus();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(&p, "id,message\n").unwrap();
        assert!(matches!(
            load_dataset(&p, DataFormat::Delimited, &c.tree, &c.bank),
            Err(CorpusError::MissingColumn(_))
        ));
    }

    #[test]
    fn both_formats_round_trip() {
        let c = corpus();
        let dir = tempfile::tempdir().unwrap();
        for format in [DataFormat::Delimited, DataFormat::JsonLines] {
            let sub = dir.path().join(format.extension());
            save_corpus_dir(&sub, format, &c.tree, &c.bank, &c.tickets).unwrap();
            let (tree, bank, data) = load_corpus_dir(&sub, format).unwrap();
            assert_eq!(tree, c.tree);
            assert_eq!(bank, c.bank);
            assert_eq!(data.records, c.tickets);
            assert_eq!(data.warnings, 0);
        }
    }

    #[test]
    fn malformed_json_line_reports_line() {
        let c = corpus();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        fs::write(&p, "{\"id\": 1}\n").unwrap();
        assert!(matches!(
            load_dataset(&p, DataFormat::JsonLines, &c.tree, &c.bank),
            Err(CorpusError::MissingColumn(_))
        ));
        fs::write(&p, "not json\n").unwrap();
        assert!(matches!(
            load_dataset(&p, DataFormat::JsonLines, &c.tree, &c.bank),
            Err(CorpusError::Malformed { line: 1, .. })
        ));
    }
}
