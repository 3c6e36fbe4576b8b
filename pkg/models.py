# Database Models for Deptrail
# One table: the ledger of finished experiment runs

import json
from typing import List, Optional

from sqlalchemy import CheckConstraint, Column, DateTime, Float, Index, Integer, String, Text
from sqlalchemy.orm import Session
from sqlalchemy.sql import func

from database import Base


# ============================================================================
# ExperimentRun Model - Run Ledger Table
# ============================================================================
class ExperimentRun(Base):
    """
    One finished `deptrail run`.

    Table: experiment_runs
    Purpose: compare accuracies across configurations without re-reading
             every run directory
    """

    __tablename__ = "experiment_runs"

    id = Column(Integer, primary_key=True, index=True, autoincrement=True)
    run_name = Column(String(100), nullable=False, index=True)

    # Protocol, e.g. "msr_subset_cross" + "AS1"
    protocol = Column(String(32), nullable=False)
    subset = Column(String(8), nullable=True)
    feature_set = Column(String(8), nullable=False)

    # Results
    average_accuracy = Column(Float, nullable=False)
    class_mean_accuracy = Column(Float, nullable=False)
    reduced_dim = Column(Integer, nullable=False)
    input_dim = Column(Integer, nullable=False)

    # Resolved configuration as a JSON object of "key": "value" strings
    config_json = Column(Text, nullable=False, default="{}")

    created_at = Column(DateTime, nullable=False, index=True, server_default=func.now())

    __table_args__ = (
        CheckConstraint("average_accuracy >= 0 AND average_accuracy <= 1", name="check_accuracy_range"),
        Index("idx_protocol_created", "protocol", "created_at"),
    )

    @classmethod
    def from_report(cls, run_name: str, report, config_lines: List[str]) -> "ExperimentRun":
        """Build a ledger row from an EvalReport and its manifest lines."""
        config = dict(line.split(" = ", 1) for line in config_lines if " = " in line)
        return cls(
            run_name=run_name,
            protocol=report.protocol,
            subset=report.subset,
            feature_set=report.feature_set,
            average_accuracy=report.average_accuracy,
            class_mean_accuracy=report.class_mean_accuracy,
            reduced_dim=report.reduced_dim,
            input_dim=report.input_dim,
            config_json=json.dumps(config, sort_keys=True),
        )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "run_name": self.run_name,
            "protocol": self.protocol,
            "subset": self.subset,
            "feature_set": self.feature_set,
            "average_accuracy": self.average_accuracy,
            "class_mean_accuracy": self.class_mean_accuracy,
            "reduced_dim": self.reduced_dim,
            "input_dim": self.input_dim,
            "created_at": self.created_at.isoformat() if self.created_at else None,
        }


def recent_runs(db: Session, protocol: Optional[str] = None, limit: int = 50) -> List[ExperimentRun]:
    """Newest runs first, optionally for one protocol."""
    query = db.query(ExperimentRun)
    if protocol:
        query = query.filter(ExperimentRun.protocol == protocol)
    return query.order_by(ExperimentRun.created_at.desc(), ExperimentRun.id.desc()).limit(limit).all()
