"""Single-agent security monitoring: SSH brute-force detection, phishing
URL scoring and anomaly-based emergent threat detection."""

__version__ = "0.1.0"
