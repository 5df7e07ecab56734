# Pipeline services
