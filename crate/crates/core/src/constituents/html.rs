//! Minimal `read_html`: every `<table>` as a header row plus string rows.

use ego_tree::NodeRef;
use scraper::node::Node;
use scraper::{ElementRef, Html, Selector};

use super::{ConstituentError, RawSymbol};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Cells of one column; short rows yield nothing for that column.
    pub fn column(&self, idx: usize) -> impl Iterator<Item = &str> {
        self.rows.iter().filter_map(move |r| r.get(idx).map(String::as_str))
    }
}

/// Parses every `<table>` in document order, nested tables included.
///
/// The first row of a table supplies the column names. `colspan` cells are
/// repeated across the columns they cover and `rowspan` cells are carried
/// down into the rows below.
pub fn extract_tables(html: &[u8]) -> Result<Vec<Table>, ConstituentError> {
    let text = std::str::from_utf8(html).map_err(|e| ConstituentError::MalformedHtml(format!("not UTF-8: {e}")))?;
    let doc = Html::parse_document(text);
    let table_sel = Selector::parse("table").expect("static selector");
    Ok(doc.select(&table_sel).map(read_table).collect())
}

fn read_table(table: ElementRef<'_>) -> Table {
    let mut grid: Vec<Vec<String>> = Vec::new();
    // (column, remaining rows, text) for cells spanning downward
    let mut carried: Vec<(usize, usize, String)> = Vec::new();

    for tr in own_rows(table) {
        let mut row: Vec<Option<String>> = Vec::new();
        for (col, left, text) in carried.iter_mut() {
            if *left > 0 {
                if row.len() <= *col {
                    row.resize(*col + 1, None);
                }
                row[*col] = Some(text.clone());
                *left -= 1;
            }
        }
        carried.retain(|c| c.1 > 0);

        let mut col = 0;
        for cell in tr.children().filter_map(ElementRef::wrap) {
            let name = cell.value().name();
            if name != "td" && name != "th" {
                continue;
            }
            while row.get(col).is_some_and(Option::is_some) {
                col += 1;
            }
            let text = cell_text(cell);
            let colspan = span_attr(cell, "colspan");
            let rowspan = span_attr(cell, "rowspan");
            for c in col..col + colspan {
                if row.len() <= c {
                    row.resize(c + 1, None);
                }
                row[c] = Some(text.clone());
                if rowspan > 1 {
                    carried.push((c, rowspan - 1, text.clone()));
                }
            }
            col += colspan;
        }
        grid.push(row.into_iter().map(Option::unwrap_or_default).collect());
    }

    let mut rows = grid.into_iter();
    let columns = rows.next().unwrap_or_default();
    Table {
        columns,
        rows: rows.collect(),
    }
}

fn span_attr(cell: ElementRef<'_>, attr: &str) -> usize {
    cell.value()
        .attr(attr)
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
        .min(1000)
}

/// `<tr>` elements that belong to this table and not to a nested one.
fn own_rows(table: ElementRef<'_>) -> Vec<ElementRef<'_>> {
    let mut out = Vec::new();
    for child in table.children().filter_map(ElementRef::wrap) {
        match child.value().name() {
            "tr" => out.push(child),
            "thead" | "tbody" | "tfoot" => {
                out.extend(
                    child
                        .children()
                        .filter_map(ElementRef::wrap)
                        .filter(|e| e.value().name() == "tr"),
                );
            }
            _ => {}
        }
    }
    out
}

/// Flattened text of a cell with whitespace collapsed. Citation
/// superscripts, scripts and styles are left out.
fn cell_text(cell: ElementRef<'_>) -> String {
    let mut buf = String::new();
    collect_text(*cell, &mut buf);
    buf.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn collect_text(node: NodeRef<'_, Node>, buf: &mut String) {
    for child in node.children() {
        match child.value() {
            Node::Text(t) => buf.push_str(t),
            Node::Element(el) => {
                let skip = match el.name() {
                    "script" | "style" => true,
                    "sup" => el.classes().any(|c| c == "reference" || c == "noprint"),
                    "br" => {
                        buf.push(' ');
                        false
                    }
                    _ => false,
                };
                if !skip {
                    collect_text(child, buf);
                }
            }
            _ => {}
        }
    }
}

/// The named column of the first table whose header has it, falling back
/// to the table at `table_hint` when no header matches.
pub fn select_symbol_column(
    tables: &[Table],
    column: &str,
    table_hint: Option<usize>,
) -> Result<Vec<RawSymbol>, ConstituentError> {
    let by_header = tables.iter().find_map(|t| t.column_index(column).map(|i| (t, i)));
    let (table, idx) = match by_header {
        Some(hit) => hit,
        None => {
            let table = table_hint
                .and_then(|h| tables.get(h))
                .ok_or_else(|| ConstituentError::ColumnNotFound {
                    column: column.to_string(),
                    context: format!("{} table(s), hint {:?}", tables.len(), table_hint),
                })?;
            // no header matched anywhere, so take the hinted table's first column
            if table.columns.is_empty() {
                return Err(ConstituentError::ColumnNotFound {
                    column: column.to_string(),
                    context: format!("table {} has no columns", table_hint.unwrap_or(0)),
                });
            }
            (table, 0)
        }
    };
    Ok(table.column(idx).filter_map(RawSymbol::new).collect())
}
