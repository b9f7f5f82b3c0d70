//! C ABI over the ddparse parser, validator and scorer.
//!
//! Documents cross the boundary as UTF-8 JSON in the corpus file format.
//! Every fallible call returns a [`DdpStatus`]; on failure the message is
//! available from [`ddp_last_error_message`] on the same thread. Strings
//! returned through out-parameters are owned by the caller and must be
//! released with [`ddp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ddparse::classifier::ClassifierError;
use ddparse::eval::{evaluate, EvalError};
use ddparse::parser::{parse_document, random_parse, ParserError, ParserModel};
use ddparse::treebank::{self, document_to_json, DiscourseTree, Granularity, TreebankError};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Model = 6,
    Mismatch = 7,
    Panic = 8,
}

/// A loaded parser model.
pub struct DdpParser {
    model: ParserModel,
}

struct Failure {
    status: DdpStatus,
    message: String,
}

impl Failure {
    fn new(status: DdpStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }
}

impl From<TreebankError> for Failure {
    fn from(e: TreebankError) -> Self {
        let status = match e {
            TreebankError::Io { .. } => DdpStatus::Io,
            TreebankError::Validation { .. } => DdpStatus::Validation,
            _ => DdpStatus::Parse,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<ParserError> for Failure {
    fn from(e: ParserError) -> Self {
        let status = match e {
            ParserError::Io { .. } | ParserError::Classifier(ClassifierError::Io { .. }) => DdpStatus::Io,
            _ => DdpStatus::Model,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::new(DdpStatus::Mismatch, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DdpStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
        let message = panic
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| panic.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure::new(DdpStatus::Panic, format!("panic: {message}")))
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            DdpStatus::Ok
        }
        Err(f) => {
            set_last_error(&f.message);
            f.status
        }
    }
}

/// # Safety
/// `s` must be NULL or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(Failure::new(DdpStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure::new(DdpStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// # Safety
/// `out` must be NULL or valid for a pointer write.
unsafe fn write_string(out: *mut *mut c_char, value: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(DdpStatus::NullPointer, "output pointer is NULL"));
    }
    let c = CString::new(value).map_err(|_| Failure::new(DdpStatus::Parse, "output contains a NUL byte"))?;
    *out = c.into_raw();
    Ok(())
}

fn parse_doc(json: &str) -> Result<DiscourseTree, Failure> {
    Ok(treebank::parse_document(json, "<input>")?)
}

fn parse_doc_array(json: &str, what: &str) -> Result<Vec<DiscourseTree>, Failure> {
    let values: Vec<serde_json::Value> = serde_json::from_str(json).map_err(|e| {
        Failure::new(
            DdpStatus::Parse,
            format!("{what}: expected a JSON array of documents: {e}"),
        )
    })?;
    values
        .iter()
        .map(|v| Ok(treebank::parse_document(&v.to_string(), what)?))
        .collect()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ddp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a
/// successful call. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn ddp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ddp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a parser model file into `*out`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ddp_parser_load(path: *const c_char, out: *mut *mut DdpParser) -> DdpStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        if out.is_null() {
            return Err(Failure::new(DdpStatus::NullPointer, "output pointer is NULL"));
        }
        let model = ParserModel::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(DdpParser { model }));
        Ok(())
    })
}

/// Releases a parser. NULL is ignored.
///
/// # Safety
/// `parser` must be NULL or a handle from [`ddp_parser_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ddp_parser_free(parser: *mut DdpParser) {
    if !parser.is_null() {
        drop(Box::from_raw(parser));
    }
}

/// Parses the EDUs of a document; any annotation in the input is ignored.
///
/// # Safety
/// `parser` must be a live handle, `doc_json` a valid NUL-terminated string
/// and `out_json` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ddp_parser_parse_json(
    parser: *const DdpParser,
    doc_json: *const c_char,
    out_json: *mut *mut c_char,
) -> DdpStatus {
    guard(|| {
        let parser = parser
            .as_ref()
            .ok_or_else(|| Failure::new(DdpStatus::NullPointer, "parser is NULL"))?;
        let doc = parse_doc(read_str(doc_json, "document")?)?;
        let tree = parse_document(&doc.stripped(), &parser.model)?;
        write_string(out_json, document_to_json(&tree))
    })
}

/// Random-baseline parse of a document with the given seed.
///
/// # Safety
/// `doc_json` must be a valid NUL-terminated string and `out_json` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ddp_random_parse_json(
    doc_json: *const c_char,
    seed: u64,
    out_json: *mut *mut c_char,
) -> DdpStatus {
    guard(|| {
        let doc = parse_doc(read_str(doc_json, "document")?)?;
        let mut tree = random_parse(&doc.edus, seed)?;
        tree.doc_id = doc.doc_id;
        write_string(out_json, document_to_json(&tree))
    })
}

/// Checks that a document parses and satisfies the tree constraints.
/// Returns `Validation` with the first violated rule otherwise.
///
/// # Safety
/// `doc_json` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ddp_validate_json(doc_json: *const c_char) -> DdpStatus {
    guard(|| parse_doc(read_str(doc_json, "document")?).map(drop))
}

/// Scores a JSON array of predicted documents against a JSON array of gold
/// documents matched by `doc_id`. `granularity` is `"fine"`, `"coarse"` or
/// NULL for fine. Writes the report as JSON.
///
/// # Safety
/// String arguments must be NULL (where allowed) or valid NUL-terminated
/// strings and `out_json` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ddp_evaluate_json(
    pred_json: *const c_char,
    gold_json: *const c_char,
    granularity: *const c_char,
    out_json: *mut *mut c_char,
) -> DdpStatus {
    guard(|| {
        let preds = parse_doc_array(read_str(pred_json, "predictions")?, "predictions")?;
        let golds = parse_doc_array(read_str(gold_json, "gold")?, "gold")?;
        let granularity = if granularity.is_null() {
            Granularity::Fine
        } else {
            read_str(granularity, "granularity")?.parse::<Granularity>()?
        };
        let report = evaluate(&preds, &golds, granularity)?;
        let json = serde_json::to_string(&report).map_err(|e| Failure::new(DdpStatus::Parse, e.to_string()))?;
        write_string(out_json, json)
    })
}
