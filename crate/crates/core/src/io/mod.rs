//! File formats: study documents, questionnaire rows, CSV judgments and
//! result reports.

pub mod csv_import;
pub mod questionnaire;
pub mod real;
pub mod report;
pub mod study;
