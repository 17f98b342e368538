//! Read-only `.xlsx` ingestion.
//!
//! Reads `xl/workbook.xml`, the worksheet parts, and the optional shared
//! strings table. Cell values decode per the `t` attribute (`n`, `s`, `str`,
//! `inlineStr`, `b`, `e`); `<f>` elements load as formulas with their cached
//! `<v>` preserved for recalculation diffs. Styles, themes, charts, and other
//! presentation parts are skipped with a warning.

use std::collections::HashMap;
use std::io::{Cursor, Read};

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use thiserror::Error;

use crate::addr::parse_a1;
use crate::value::{CellValue, ErrorCode};
use crate::workbook::{Workbook, WorkbookBuilder};

#[derive(Debug, Error)]
pub enum XlsxError {
    #[error("not a valid archive: {0}")]
    Zip(String),
    #[error("missing part `{0}`")]
    MissingPart(String),
    #[error("XML error in `{part}`: {message}")]
    Xml { part: String, message: String },
    #[error("shared string index {0} out of bounds")]
    SharedStringOutOfBounds(usize),
    #[error("{0}")]
    Invalid(String),
}

struct SheetEntry {
    name: String,
    rel_id: Option<String>,
    sheet_id: Option<u32>,
}

/// Read a workbook from `.xlsx` bytes.
pub fn read_xlsx(bytes: &[u8]) -> Result<Workbook, XlsxError> {
    let mut archive =
        zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| XlsxError::Zip(e.to_string()))?;

    let mut warnings = Vec::new();
    for name in archive.file_names() {
        if name.starts_with("xl/styles")
            || name.starts_with("xl/theme/")
            || name.starts_with("xl/charts/")
            || name.starts_with("xl/drawings/")
            || name.starts_with("xl/pivotTables/")
            || name.starts_with("xl/pivotCache/")
        {
            warnings.push(format!("skipped unsupported part `{name}`"));
        }
    }
    warnings.sort();

    let workbook_xml = read_part(&mut archive, "xl/workbook.xml")?
        .ok_or_else(|| XlsxError::MissingPart("xl/workbook.xml".into()))?;
    let sheet_entries = parse_workbook_xml(&workbook_xml)?;
    if sheet_entries.is_empty() {
        return Err(XlsxError::Invalid("workbook declares no sheets".into()));
    }

    let rels = match read_part(&mut archive, "xl/_rels/workbook.xml.rels")? {
        Some(xml) => parse_relationships(&xml)?,
        None => HashMap::new(),
    };

    let shared_strings = match read_part(&mut archive, "xl/sharedStrings.xml")? {
        Some(xml) => Some(parse_shared_strings(&xml)?),
        None => None,
    };

    let mut builder = WorkbookBuilder::new();
    for w in warnings {
        builder = builder.warning(w);
    }
    for (index, entry) in sheet_entries.iter().enumerate() {
        let target = sheet_target(entry, &rels, index);
        let xml = read_part(&mut archive, &target)?
            .ok_or_else(|| XlsxError::MissingPart(target.clone()))?;
        builder = builder.sheet(&entry.name);
        builder = parse_sheet_xml(&xml, &target, &entry.name, shared_strings.as_deref(), builder)?;
    }
    builder.build().map_err(XlsxError::Invalid)
}

fn read_part<R: Read + std::io::Seek>(
    archive: &mut zip::ZipArchive<R>,
    name: &str,
) -> Result<Option<Vec<u8>>, XlsxError> {
    match archive.by_name(name) {
        Ok(mut file) => {
            let mut buf = Vec::new();
            file.read_to_end(&mut buf).map_err(|e| XlsxError::Zip(e.to_string()))?;
            Ok(Some(buf))
        }
        Err(zip::result::ZipError::FileNotFound) => Ok(None),
        Err(e) => Err(XlsxError::Zip(e.to_string())),
    }
}

fn xml_err(part: &str, e: impl std::fmt::Display) -> XlsxError {
    XlsxError::Xml { part: part.to_string(), message: e.to_string() }
}

fn text_content(text: &quick_xml::events::BytesText<'_>, part: &str) -> Result<String, XlsxError> {
    text.xml10_content().map(|c| c.into_owned()).map_err(|e| xml_err(part, e))
}

fn parse_workbook_xml(xml: &[u8]) -> Result<Vec<SheetEntry>, XlsxError> {
    const PART: &str = "xl/workbook.xml";
    let mut reader = Reader::from_reader(xml);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut sheets = Vec::new();
    loop {
        match reader.read_event_into(&mut buf) {
            Ok(Event::Start(e)) | Ok(Event::Empty(e)) if e.name().as_ref() == b"sheet" => {
                let mut name = None;
                let mut rel_id = None;
                let mut sheet_id = None;
                for attr in e.attributes() {
                    let attr = attr.map_err(|e| xml_err(PART, e))?;
                    let value = attr.normalized_value(quick_xml::XmlVersion::Explicit1_0).map_err(|e| xml_err(PART, e))?.into_owned();
                    match attr.key.as_ref() {
                        b"name" => name = Some(value),
                        b"sheetId" => sheet_id = value.parse().ok(),
                        b"r:id" => rel_id = Some(value),
                        _ => {}
                    }
                }
                if let Some(name) = name {
                    sheets.push(SheetEntry { name, rel_id, sheet_id });
                }
            }
            Ok(Event::Eof) => break,
            Err(e) => return Err(xml_err(PART, e)),
            _ => {}
        }
        buf.clear();
    }
    Ok(sheets)
}

fn parse_relationships(xml: &[u8]) -> Result<HashMap<String, String>, XlsxError> {
    const PART: &str = "xl/_rels/workbook.xml.rels";
    let mut reader = Reader::from_reader(xml);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut map = HashMap::new();
    loop {
        match reader.read_event_into(&mut buf) {
            Ok(Event::Start(e)) | Ok(Event::Empty(e)) if e.name().as_ref() == b"Relationship" => {
                let mut id = None;
                let mut target = None;
                let mut rel_type = None;
                for attr in e.attributes() {
                    let attr = attr.map_err(|e| xml_err(PART, e))?;
                    let value = attr.normalized_value(quick_xml::XmlVersion::Explicit1_0).map_err(|e| xml_err(PART, e))?.into_owned();
                    match attr.key.as_ref() {
                        b"Id" => id = Some(value),
                        b"Target" => target = Some(value),
                        b"Type" => rel_type = Some(value),
                        _ => {}
                    }
                }
                if let (Some(id), Some(target), Some(rel_type)) = (id, target, rel_type) {
                    if rel_type.contains("worksheet") {
                        map.insert(id, normalize_target(&target));
                    }
                }
            }
            Ok(Event::Eof) => break,
            Err(e) => return Err(xml_err(PART, e)),
            _ => {}
        }
        buf.clear();
    }
    Ok(map)
}

fn normalize_target(target: &str) -> String {
    let trimmed = target.trim_start_matches('/');
    if trimmed.starts_with("xl/") {
        trimmed.to_string()
    } else {
        format!("xl/{trimmed}")
    }
}

fn sheet_target(entry: &SheetEntry, rels: &HashMap<String, String>, index: usize) -> String {
    if let Some(rel_id) = &entry.rel_id {
        if let Some(target) = rels.get(rel_id) {
            return target.clone();
        }
    }
    match entry.sheet_id {
        Some(id) => format!("xl/worksheets/sheet{id}.xml"),
        None => format!("xl/worksheets/sheet{}.xml", index + 1),
    }
}

fn parse_shared_strings(xml: &[u8]) -> Result<Vec<String>, XlsxError> {
    const PART: &str = "xl/sharedStrings.xml";
    let mut reader = Reader::from_reader(xml);
    reader.config_mut().trim_text(false);
    let mut buf = Vec::new();
    let mut strings = Vec::new();
    let mut current = String::new();
    let mut in_si = false;
    loop {
        match reader.read_event_into(&mut buf) {
            Ok(Event::Start(e)) if e.name().as_ref() == b"si" => {
                current.clear();
                in_si = true;
            }
            Ok(Event::Start(e)) if e.name().as_ref() == b"t" && in_si => {
                let text = reader.read_text(e.name()).map_err(|e| xml_err(PART, e))?;
                current.push_str(&text_content(&text, PART)?);
            }
            Ok(Event::End(e)) if e.name().as_ref() == b"si" => {
                strings.push(current.clone());
                in_si = false;
            }
            Ok(Event::Eof) => break,
            Err(e) => return Err(xml_err(PART, e)),
            _ => {}
        }
        buf.clear();
    }
    Ok(strings)
}

fn get_attr(element: &BytesStart<'_>, key: &[u8], part: &str) -> Result<Option<String>, XlsxError> {
    for attr in element.attributes() {
        let attr = attr.map_err(|e| xml_err(part, e))?;
        if attr.key.as_ref() == key {
            return Ok(Some(attr.normalized_value(quick_xml::XmlVersion::Explicit1_0).map_err(|e| xml_err(part, e))?.into_owned()));
        }
    }
    Ok(None)
}

fn parse_sheet_xml(
    xml: &[u8],
    part: &str,
    sheet_name: &str,
    shared_strings: Option<&[String]>,
    mut builder: WorkbookBuilder,
) -> Result<WorkbookBuilder, XlsxError> {
    let mut reader = Reader::from_reader(xml);
    reader.config_mut().trim_text(false);
    let mut buf = Vec::new();
    loop {
        match reader.read_event_into(&mut buf) {
            Ok(Event::Start(e)) if e.name().as_ref() == b"c" => {
                let start = e.to_owned();
                builder = parse_cell(&mut reader, &start, part, sheet_name, shared_strings, builder)?;
            }
            Ok(Event::Empty(e)) if e.name().as_ref() == b"c" => {
                // A cell with attributes but no content is blank; nothing to load.
            }
            Ok(Event::Eof) => break,
            Err(e) => return Err(xml_err(part, e)),
            _ => {}
        }
        buf.clear();
    }
    Ok(builder)
}

fn parse_cell(
    reader: &mut Reader<&[u8]>,
    start: &BytesStart<'_>,
    part: &str,
    sheet_name: &str,
    shared_strings: Option<&[String]>,
    mut builder: WorkbookBuilder,
) -> Result<WorkbookBuilder, XlsxError> {
    let reference = get_attr(start, b"r", part)?
        .ok_or_else(|| XlsxError::Invalid(format!("cell without `r` attribute in `{part}`")))?;
    parse_a1(&reference)
        .map_err(|e| XlsxError::Invalid(format!("bad cell address `{reference}` in `{part}`: {e}")))?;
    let cell_type = get_attr(start, b"t", part)?;

    let mut value_text: Option<String> = None;
    let mut formula_text: Option<String> = None;
    let mut formula_kind: Option<String> = None;
    let mut inline_text: Option<String> = None;
    let mut buf = Vec::new();
    loop {
        match reader.read_event_into(&mut buf) {
            Ok(Event::Start(e)) if e.name().as_ref() == b"v" => {
                let text = reader.read_text(e.name()).map_err(|e| xml_err(part, e))?;
                value_text = Some(text_content(&text, part)?);
            }
            Ok(Event::Start(e)) if e.name().as_ref() == b"f" => {
                formula_kind = get_attr(&e.to_owned(), b"t", part)?;
                let text = reader.read_text(e.name()).map_err(|e| xml_err(part, e))?;
                formula_text = Some(text_content(&text, part)?);
            }
            Ok(Event::Empty(e)) if e.name().as_ref() == b"f" => {
                formula_kind = get_attr(&e.to_owned(), b"t", part)?;
                formula_text = Some(String::new());
            }
            Ok(Event::Start(e)) if e.name().as_ref() == b"is" => {
                inline_text = Some(read_inline_string(reader, part)?);
            }
            Ok(Event::End(e)) if e.name().as_ref() == b"c" => break,
            Ok(Event::Eof) => return Err(XlsxError::Invalid(format!("unexpected EOF inside cell in `{part}`"))),
            Err(e) => return Err(xml_err(part, e)),
            _ => {}
        }
        buf.clear();
    }

    let mut value = match inline_text {
        Some(text) => CellValue::Text(text),
        None => match decode_value(value_text.as_deref(), cell_type.as_deref(), shared_strings) {
            Ok(v) => v,
            Err(DecodeIssue::Fatal(e)) => return Err(e),
            Err(DecodeIssue::Warn(message, fallback)) => {
                builder = builder.warning(format!("{sheet_name}!{reference}: {message}"));
                fallback
            }
        },
    };

    match formula_text {
        None => Ok(builder.value(&reference, value)),
        Some(text) => {
            let unsupported_kind = matches!(formula_kind.as_deref(), Some("shared") | Some("array") | Some("dataTable"));
            if text.is_empty() || unsupported_kind {
                builder = builder.warning(format!(
                    "{sheet_name}!{reference}: unsupported {} formula; cell loaded as #NAME?",
                    formula_kind.as_deref().unwrap_or("empty")
                ));
                value = CellValue::Error(ErrorCode::Name);
                return Ok(builder.value(&reference, value));
            }
            let formula = format!("={text}");
            Ok(match value {
                CellValue::Blank => builder.formula(&reference, &formula),
                cached => builder.formula_with_value(&reference, &formula, cached),
            })
        }
    }
}

enum DecodeIssue {
    Fatal(XlsxError),
    Warn(String, CellValue),
}

fn decode_value(
    value_text: Option<&str>,
    cell_type: Option<&str>,
    shared_strings: Option<&[String]>,
) -> Result<CellValue, DecodeIssue> {
    let Some(raw) = value_text else {
        return Ok(CellValue::Blank);
    };
    let trimmed = raw.trim();
    match cell_type {
        None | Some("n") => match trimmed.parse::<f64>() {
            Ok(n) if n.is_finite() => Ok(CellValue::Number(n)),
            _ => Err(DecodeIssue::Warn(
                format!("value `{trimmed}` is not a number; loaded as text"),
                CellValue::Text(raw.to_string()),
            )),
        },
        Some("s") => {
            let table = shared_strings.ok_or_else(|| {
                DecodeIssue::Fatal(XlsxError::MissingPart("xl/sharedStrings.xml".into()))
            })?;
            let idx: usize = trimmed.parse().map_err(|_| {
                DecodeIssue::Fatal(XlsxError::Invalid(format!("bad shared string index `{trimmed}`")))
            })?;
            let text = table
                .get(idx)
                .ok_or(DecodeIssue::Fatal(XlsxError::SharedStringOutOfBounds(idx)))?;
            Ok(CellValue::Text(text.clone()))
        }
        Some("str") | Some("inlineStr") => Ok(CellValue::Text(raw.to_string())),
        Some("b") => match trimmed {
            "1" | "true" | "TRUE" => Ok(CellValue::Boolean(true)),
            "0" | "false" | "FALSE" => Ok(CellValue::Boolean(false)),
            other => Err(DecodeIssue::Warn(
                format!("bad boolean `{other}`; loaded as text"),
                CellValue::Text(raw.to_string()),
            )),
        },
        Some("e") => match ErrorCode::parse(trimmed) {
            Some(code) => Ok(CellValue::Error(code)),
            None => Err(DecodeIssue::Warn(
                format!("unsupported error code `{trimmed}`; loaded as text"),
                CellValue::Text(trimmed.to_string()),
            )),
        },
        Some(other) => Err(DecodeIssue::Warn(
            format!("unknown cell type `{other}`; loaded as text"),
            CellValue::Text(raw.to_string()),
        )),
    }
}

fn read_inline_string(reader: &mut Reader<&[u8]>, part: &str) -> Result<String, XlsxError> {
    let mut buf = Vec::new();
    let mut value = String::new();
    loop {
        match reader.read_event_into(&mut buf) {
            Ok(Event::Start(e)) if e.name().as_ref() == b"t" => {
                let text = reader.read_text(e.name()).map_err(|e| xml_err(part, e))?;
                value.push_str(&text_content(&text, part)?);
            }
            Ok(Event::End(e)) if e.name().as_ref() == b"is" => break,
            Ok(Event::Eof) => {
                return Err(XlsxError::Invalid(format!("unexpected EOF inside inline string in `{part}`")))
            }
            Err(e) => return Err(xml_err(part, e)),
            _ => {}
        }
        buf.clear();
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addr::parse_address;

    pub(crate) fn build_xlsx(parts: &[(&str, &str)]) -> Vec<u8> {
        use std::io::Write;
        let cursor = Cursor::new(Vec::new());
        let mut writer = zip::ZipWriter::new(cursor);
        let options = zip::write::SimpleFileOptions::default();
        for (name, content) in parts {
            writer.start_file(*name, options).unwrap();
            writer.write_all(content.as_bytes()).unwrap();
        }
        writer.finish().unwrap().into_inner()
    }

    const CONTENT_TYPES: &str = r#"<?xml version="1.0" encoding="UTF-8" standalone="yes"?>
<Types xmlns="http://schemas.openxmlformats.org/package/2006/content-types">
<Default Extension="xml" ContentType="application/xml"/>
</Types>"#;

    fn workbook_xml(names: &[&str]) -> String {
        let sheets: String = names
            .iter()
            .enumerate()
            .map(|(i, n)| format!(r#"<sheet name="{n}" sheetId="{}" r:id="rId{}"/>"#, i + 1, i + 1))
            .collect();
        format!(
            r#"<?xml version="1.0"?><workbook xmlns:r="http://schemas.openxmlformats.org/officeDocument/2006/relationships"><sheets>{sheets}</sheets></workbook>"#
        )
    }

    fn rels_xml(count: usize) -> String {
        let rels: String = (1..=count)
            .map(|i| {
                format!(
                    r#"<Relationship Id="rId{i}" Type="http://schemas.openxmlformats.org/officeDocument/2006/relationships/worksheet" Target="worksheets/sheet{i}.xml"/>"#
                )
            })
            .collect();
        format!(r#"<?xml version="1.0"?><Relationships xmlns="http://schemas.openxmlformats.org/package/2006/relationships">{rels}</Relationships>"#)
    }

    #[test]
    fn minimal_single_value() {
        let sheet = r#"<?xml version="1.0"?><worksheet><sheetData><row r="1"><c r="A1"><v>1</v></c></row></sheetData></worksheet>"#;
        let bytes = build_xlsx(&[
            ("[Content_Types].xml", CONTENT_TYPES),
            ("xl/workbook.xml", &workbook_xml(&["Sheet1"])),
            ("xl/_rels/workbook.xml.rels", &rels_xml(1)),
            ("xl/worksheets/sheet1.xml", sheet),
        ]);
        let wb = read_xlsx(&bytes).unwrap();
        assert_eq!(wb.stored_value(&parse_address("A1", "Sheet1").unwrap()), CellValue::Number(1.0));
    }

    #[test]
    fn shared_string_lookup() {
        // Fixture built by hand to the worksheet part schema: t="s" with index 0.
        let sheet = r#"<?xml version="1.0"?><worksheet><sheetData><row r="2"><c r="B2" t="s"><v>0</v></c></row></sheetData></worksheet>"#;
        let sst = r#"<?xml version="1.0"?><sst count="1" uniqueCount="1"><si><t>x</t></si></sst>"#;
        let bytes = build_xlsx(&[
            ("[Content_Types].xml", CONTENT_TYPES),
            ("xl/workbook.xml", &workbook_xml(&["Sheet1"])),
            ("xl/_rels/workbook.xml.rels", &rels_xml(1)),
            ("xl/sharedStrings.xml", sst),
            ("xl/worksheets/sheet1.xml", sheet),
        ]);
        let wb = read_xlsx(&bytes).unwrap();
        assert_eq!(wb.stored_value(&parse_address("B2", "Sheet1").unwrap()), CellValue::Text("x".into()));
    }

    #[test]
    fn shared_string_without_table_is_an_error() {
        let sheet = r#"<?xml version="1.0"?><worksheet><sheetData><row r="1"><c r="A1" t="s"><v>0</v></c></row></sheetData></worksheet>"#;
        let bytes = build_xlsx(&[
            ("[Content_Types].xml", CONTENT_TYPES),
            ("xl/workbook.xml", &workbook_xml(&["Sheet1"])),
            ("xl/_rels/workbook.xml.rels", &rels_xml(1)),
            ("xl/worksheets/sheet1.xml", sheet),
        ]);
        let err = read_xlsx(&bytes).unwrap_err();
        assert!(matches!(err, XlsxError::MissingPart(p) if p == "xl/sharedStrings.xml"));
    }

    #[test]
    fn corrupt_zip_and_missing_workbook() {
        assert!(matches!(read_xlsx(b"nonsense"), Err(XlsxError::Zip(_))));
        let bytes = build_xlsx(&[("[Content_Types].xml", CONTENT_TYPES)]);
        assert!(matches!(read_xlsx(&bytes), Err(XlsxError::MissingPart(p)) if p == "xl/workbook.xml"));
    }

    #[test]
    fn formula_with_cached_value_and_unknown_type_warning() {
        let sheet = r#"<?xml version="1.0"?><worksheet><sheetData>
<row r="1"><c r="A1"><v>2</v></c><c r="B1" t="weird"><v>zz</v></c></row>
<row r="2"><c r="A2"><f>A1*3</f><v>6</v></c></row>
</sheetData></worksheet>"#;
        let bytes = build_xlsx(&[
            ("[Content_Types].xml", CONTENT_TYPES),
            ("xl/workbook.xml", &workbook_xml(&["Sheet1"])),
            ("xl/_rels/workbook.xml.rels", &rels_xml(1)),
            ("xl/worksheets/sheet1.xml", sheet),
        ]);
        let wb = read_xlsx(&bytes).unwrap();
        let a2 = wb.cell(&parse_address("A2", "Sheet1").unwrap()).unwrap();
        assert!(a2.formula.is_some());
        assert_eq!(a2.value, CellValue::Number(6.0));
        assert_eq!(wb.stored_value(&parse_address("B1", "Sheet1").unwrap()), CellValue::Text("zz".into()));
        assert!(wb.warnings().iter().any(|w| w.contains("unknown cell type")));
    }

    #[test]
    fn skipped_parts_warn() {
        let sheet = r#"<?xml version="1.0"?><worksheet><sheetData/></worksheet>"#;
        let bytes = build_xlsx(&[
            ("[Content_Types].xml", CONTENT_TYPES),
            ("xl/workbook.xml", &workbook_xml(&["Sheet1"])),
            ("xl/_rels/workbook.xml.rels", &rels_xml(1)),
            ("xl/styles.xml", "<styleSheet/>"),
            ("xl/worksheets/sheet1.xml", sheet),
        ]);
        let wb = read_xlsx(&bytes).unwrap();
        assert!(wb.warnings().iter().any(|w| w.contains("xl/styles.xml")));
    }
}
