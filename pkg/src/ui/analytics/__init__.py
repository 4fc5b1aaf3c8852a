from .reporting import (
    export_report_json,
    export_report_csv,
    format_report_table,
    format_leave_one_out_table
)
