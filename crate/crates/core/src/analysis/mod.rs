//! Rank correlation between pretraining WER and downstream BLEU, with the
//! bundled dev-set reference table.

mod records;
mod spearman;

pub use records::{
    bundled_table, correlate_report, emit_plot_data, marker_group, parse_records, plot_data_tsv,
    read_records, CorrelationReport, ExperimentRecord, PlotPoint, RecordSplit, ReferenceTable,
    BUNDLED_TABLE,
};
pub use spearman::{average_ranks, spearman, spearman_exact};
