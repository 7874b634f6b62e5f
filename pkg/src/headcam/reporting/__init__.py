from .charts import get_accuracy_chart, get_csi_chart, get_pca_chart, get_sweep_chart
from .report import collect_tables, write_report
