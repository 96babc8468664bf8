"""Bundled JointMap configuration files (editable defaults per dataset)."""
