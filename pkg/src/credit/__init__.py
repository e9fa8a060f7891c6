"""Joint default law and risk-adjusted discounting."""
