"""Case-study harnesses: static, sequence and APS inference."""
